import argparse
import asyncio
import json
import logging
import math
import sys
from collections import Counter
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from cascade_types.errors import CascadeError, DegenerateRealizationError, InvariantViolation, LatticeLawError, VertexRangeError
from cascade_types.stats_types import TracePoint
from config.logging_config import configure_logging
from config.settings import VERSION, settings
from models.decoration import DecorationSpec
from models.run_config import RunConfig
from models.weight_law import LAW_SCHEMA, WeightLaw
from services.cascade_service import cascade_service
from services.disorder_service import LOG2, disorder_service
from services.export_service import export_service
from services.limit_service import limit_service
from services.replica_service import (
    STREAM_FINITE,
    STREAM_LIMIT,
    STREAM_STABLE,
    STREAM_SUPERPOSE,
    replica_service,
)
from services.stats_service import stats_service
from utils.vertex_paths import ROOT_LABEL, level_vertices, path_label

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2

# Poisson strip used by the superposability check; only centers below the threshold are compared
_SUPERPOSE_BETA = 2.0
_SUPERPOSE_TAIL_TOL = 1e-2
_SUPERPOSE_THRESHOLD = 0.0
_RN_TOP = 5
_HILL_MIN_SAMPLES = 100


class UsageError(Exception):
    """Malformed flags or configuration"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _number_list(cast):
    def parse(raw: str) -> List:
        try:
            return [cast(item) for item in raw.split(",") if item.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list: {raw!r}") from e

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--seed", type=int, help="root seed (mandatory for compare)")
    common.add_argument("--threads", type=int, help="replica worker threads")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--law", type=json.loads, help='weight law JSON, e.g. {"kind": "gaussian", "params": {"beta": 1.2}}')
    common.add_argument("--n", type=int, help="tree depth")
    common.add_argument("--n-grid", dest="n_grid", type=_number_list(int), help="depths for simulate, e.g. 8,12,16")
    common.add_argument("--k", type=int, help="stored vertex depth of limit samples")
    common.add_argument("--leaf-depth", dest="leaf_depth", type=int, help="depth N of the D_N leaf approximation")
    common.add_argument("--betas", type=_number_list(float), help="inverse temperatures, e.g. 1.5,2")
    common.add_argument("--replicas", type=int)
    common.add_argument("--samples", type=int, help="limit samples (defaults to --replicas)")
    common.add_argument("--theta", type=float)
    common.add_argument("--tail-tol", dest="tail_tol", type=float)
    common.add_argument("--decoration", type=json.loads, help="decoration JSON")
    common.add_argument("--fourier-sets", dest="fourier_sets", type=json.loads, help="character index sets, e.g. [[], [1], [1, 2]]")
    common.add_argument("--genealogy-draws", dest="genealogy_draws", type=int)
    common.add_argument("--beta-ref", dest="beta_ref", type=float, help="inverse temperature of the theta calibration")
    common.add_argument("--log-level", dest="log_level")

    parser = _Parser(prog="cascade-toolkit", description="Normalized multiplicative cascades and their strong-disorder limits")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("classify", parents=[common], help="disorder class, moments, alpha and boundary residuals")
    commands.add_parser("simulate", parents=[common], help="finite-n replicas: Z, M, D and the Aidekon-Shi trace")
    commands.add_parser("limit", parents=[common], help="limit samples: masses, I values, RN tables, TV distances, genealogy")
    commands.add_parser("compare", parents=[common], help="finite-n versus limit ensembles")
    commands.add_parser("fourier", parents=[common], help="Fourier coefficients of the finite and limit measures")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults (environment) < --config file < flags"""
    data: Dict[str, Any] = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(data, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")

    for name in RunConfig.model_fields:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        message = f"invalid configuration: {e}"
        if any(error["loc"] and error["loc"][0] == "law" for error in e.errors()):
            message += f"\nlaw schema: {json.dumps(LAW_SCHEMA, indent=2)}"
        raise UsageError(message) from e


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _failures(reports, context: str) -> List[str]:
    return [
        f"{context}: {report.name} residual {report.max_residual:.3g} > {report.tolerance:.3g}"
        for report in reports
        if not report.passed
    ]


class CascadeToolkitApp:
    def __init__(self, config: RunConfig, command: str):
        self.config = config
        self.command = command
        self.stamp = {'seed': config.seed, 'config_hash': config.config_hash(), 'version': VERSION}
        self.failed_invariants: List[str] = []

    def _path(self, name: str) -> Path:
        return export_service.resolve(name, self.config.output_dir)

    def _write_csv(self, name: str, header: Sequence[str], rows) -> str:
        return str(export_service.write_csv(self._path(name), header, rows, self.stamp))

    def _manifest(self, name: str, payload: Dict[str, Any]) -> str:
        payload = {**payload, **self.stamp, 'command': self.command, 'config': self.config.hashed_fields()}
        return str(export_service.write_manifest(self._path(name), json.loads(json.dumps(payload, default=_jsonable))))

    def _hill(self, values: Sequence[float]) -> Optional[Dict[str, Any]]:
        positive = [value for value in values if value > 0 and math.isfinite(value)]
        if len(positive) < _HILL_MIN_SAMPLES:
            return None
        return stats_service.hill_index(positive).to_dict()

    def _boundary_law(self, law: WeightLaw) -> WeightLaw:
        """Energy law in boundary form for the limit constructions"""
        if law.is_x_law:
            regime = disorder_service.classify_disorder(law)
            if regime.disorder_class == "weak":
                raise CascadeError(f"{law.label()} is in weak disorder; the limit objects need strong or critical disorder")
            alpha = 1.0 if regime.disorder_class == "critical" else disorder_service.solve_alpha(law)
            boundary = disorder_service.x_to_w(law, alpha)
        elif disorder_service.is_boundary(law):
            return law
        else:
            boundary = disorder_service.boundary_normalize(law)
        logger.info(f"✓ Using boundary-form law {boundary.label()}")
        return boundary

    async def run(self) -> Dict[str, Any]:
        handler = getattr(self, f"cmd_{self.command}")
        return await handler()

    # classify
    async def cmd_classify(self) -> Dict[str, Any]:
        law = self.config.law
        regime = disorder_service.classify_disorder(law)
        report: Dict[str, Any] = {
            'law': law.to_dict(),
            'lattice': law.is_lattice,
            **regime.to_dict(),
            'moments': disorder_service.compute_moments(law).to_dict(),
            'alpha': None,
            'boundary_law': None,
            'boundary_residuals': None,
            'size_biased_moment_finite': None,
        }

        if regime.disorder_class != "weak":
            alpha = 1.0 if regime.disorder_class == "critical" else disorder_service.solve_alpha(law)
            boundary = disorder_service.x_to_w(law, alpha)
            residuals = disorder_service.boundary_residuals(boundary)
            report.update(alpha=alpha, boundary_law=boundary.to_dict(), boundary_residuals=residuals.to_dict())
            report['size_biased_moment_finite'] = disorder_service.size_biased_moment_finite(boundary)

        if not law.is_x_law:
            report['is_boundary'] = disorder_service.is_boundary(law)
            try:
                report['critical_beta'] = disorder_service.find_critical_beta(law)
            except CascadeError as e:
                logger.warning(f"⚠️ No critical inverse temperature: {e}")
                report['critical_beta'] = None

        self._manifest("classify.json", report)
        return {'command': 'classify', **report}

    # simulate
    def _simulate_replica(self, n: int, index: int, rng: np.random.Generator) -> Dict[str, Any]:
        config = self.config
        real = cascade_service.simulate_tree(config.law, n, rng, seed=config.seed)
        rows, failed = [], []
        for beta in config.betas:
            table = cascade_service.partition_table(real, beta, min(n, 2))
            failed += _failures(cascade_service.check_invariants(real, table), f"n={n} replica {index} beta={beta}")
            rows.append([n, index, beta, table.log_z_root, table.z_root, table.m_n, table.d_n, table.min_energy, table.scaled_z])

        try:
            ratio = cascade_service.aidekon_shi_ratio(real)
        except DegenerateRealizationError:
            ratio = None
        return {'rows': rows, 'ratio': ratio, 'failed': failed, 'realization': real if index == 0 else None}

    async def cmd_simulate(self) -> Dict[str, Any]:
        config = self.config
        law = config.law
        sigma_sq = disorder_service.compute_moments(law).sigma_sq
        target = math.sqrt(2.0 / (math.pi * sigma_sq))

        rows, ratios_by_n, median_m = [], {}, {}
        for n in config.depths:
            cascade_service.check_depth(n)
            results, _ = await replica_service.run(
                lambda index, rng, n=n: self._simulate_replica(n, index, rng),
                config.replicas,
                config.seed,
                STREAM_FINITE,
                n,
                config.threads,
                label=f"depth-{n} replicas",
            )
            for result in results:
                rows.extend(result['rows'])
                self.failed_invariants.extend(result['failed'])
            export_service.write_realization(self._path(f"realization_n{n}.bin"), results[0]['realization'])

            ratios_by_n[n] = [result['ratio'] for result in results if result['ratio'] is not None]
            for beta in config.betas:
                median_m[f"n={n},beta={beta}"] = float(np.median([row[5] for row in rows if row[0] == n and row[2] == beta]))

        header = ["n", "replica", "beta", "log_Z", "Z", "M", "D", "min_energy", "scaled_Z"]
        self._write_csv("simulate.csv", header, rows)

        trace_rows, monotone = [], None
        live = {n: values for n, values in ratios_by_n.items() if values}
        if len(live) >= 2:
            trace = stats_service.convergence_trace(live, target, rng=np.random.default_rng(config.seed))
            monotone = trace.monotone_approach
            points = trace.points
        else:
            points = []
            for n, values in live.items():
                low, high = stats_service.bootstrap_band(values, rng=np.random.default_rng(config.seed))
                median = float(np.median(values))
                points.append(TracePoint(n=n, median=median, band_low=low, band_high=high, deviation=abs(median - target)))
        for point in points:
            trace_rows.append([point.n, point.median, point.band_low, point.band_high, point.deviation, target, len(live[point.n])])
        self._write_csv("aidekon_shi.csv", ["n", "median", "band_low", "band_high", "deviation", "target", "positive_replicas"], trace_rows)

        summary = {
            'depths': config.depths,
            'replicas': config.replicas,
            'median_M': median_m,
            'aidekon_shi_target': target,
            'monotone_approach': monotone,
            'positive_D': {str(n): len(values) for n, values in ratios_by_n.items()},
            'invariants_passed': not self.failed_invariants,
        }
        self._manifest("simulate_manifest.json", summary)
        return {'command': 'simulate', **summary}

    # limit
    def _limit_replica(self, law: WeightLaw, grid: List[float], index: int, rng: np.random.Generator) -> Dict[str, Any]:
        config = self.config
        k = config.k
        sample = limit_service.build_limit_sample(
            law, k, config.leaf_depth, config.theta, grid[0], config.tail_tol, config.decoration, rng
        )
        labels = [[path_label(vertex) for vertex in level_vertices(level)] for level in range(k + 1)]

        mass_rows, genealogy_rows, rn_rows, i_roots = [], [], [], {}
        for beta in grid:
            probs = limit_service.limit_prob(sample, beta)
            i_levels = limit_service.compute_I(sample, beta)
            i_roots[beta] = float(i_levels[0][0])
            for level in range(k + 1):
                for offset, label in enumerate(labels[level]):
                    mass_rows.append([index, beta, level, label, probs[level][offset], i_levels[level][offset]])

            draws = Counter(path_label(v) for v in limit_service.genealogy_sample(sample, beta, k, config.genealogy_draws, rng))
            genealogy_rows.extend([index, beta, label, draws.get(label, 0)] for label in labels[k])

        for beta1, beta2 in zip(grid, grid[1:]):
            for entry in limit_service.rn_derivative_table(sample, beta1, beta2, top=_RN_TOP):
                rn_rows.append([index, beta1, beta2, entry['t'], entry['x'], entry['rn']])
        tv_rows = [
            [index, low, high, tv]
            for (low, high), tv in zip(zip(grid, grid[1:]), limit_service.tv_continuity_probe(sample, grid))
        ]

        arrays = None
        if index == 0:
            arrays = {
                'x': sample.ppp.x,
                't': sample.ppp.t,
                'decoration_values': sample.ppp.decoration_values,
                'decoration_pointers': sample.ppp.decoration_pointers.astype(float),
                'field_d': np.concatenate(sample.field.d_by_level),
                'field_w': sample.field.weights,
            }
        return {
            'mass_rows': mass_rows,
            'genealogy_rows': genealogy_rows,
            'rn_rows': rn_rows,
            'tv_rows': tv_rows,
            'summary_row': [index, sample.field.root_value, sample.ppp.count, sample.ppp.tail_bound, sample.field.resampled],
            'manifest': {'sample': index, **sample.manifest()},
            'i_roots': i_roots,
            'failed': _failures(limit_service.check_invariants(sample, grid), f"limit sample {index}"),
            'arrays': arrays,
        }

    async def cmd_limit(self) -> Dict[str, Any]:
        config = self.config
        config.require_strong_betas()
        law = self._boundary_law(config.law)
        if law.is_lattice:
            logger.warning("⚠️ Lattice law: limit objects are built, but the limit theorem does not cover them")
        grid = sorted(set(config.betas))

        results, discarded = await replica_service.run(
            lambda index, rng: self._limit_replica(law, grid, index, rng),
            config.limit_samples,
            config.seed,
            STREAM_LIMIT,
            0,
            config.threads,
            label="limit samples",
        )
        for result in results:
            self.failed_invariants.extend(result['failed'])

        def collect(key: str) -> List[List[Any]]:
            return [row for result in results for row in result[key]]

        self._write_csv("limit_masses.csv", ["sample", "beta", "level", "vertex", "mass", "I"], collect('mass_rows'))
        self._write_csv("limit_genealogy.csv", ["sample", "beta", "vertex", "count"], collect('genealogy_rows'))
        self._write_csv("limit_rn.csv", ["sample", "beta1", "beta2", "t", "x", "rn"], collect('rn_rows'))
        self._write_csv("limit_tv.csv", ["sample", "beta_low", "beta_high", "tv"], collect('tv_rows'))
        self._write_csv(
            "limit_samples.csv",
            ["sample", "d_root", "centers", "tail_bound", "resampled_leaves"],
            [result['summary_row'] for result in results],
        )
        for name, array in results[0]['arrays'].items():
            export_service.write_array(self._path(f"limit_sample0_{name}.f8"), array)

        summary = {
            'law': law.to_dict(),
            'k': config.k,
            'N': config.leaf_depth,
            'theta': config.theta,
            'betas': grid,
            'decoration': config.decoration.to_dict(),
            'samples': config.limit_samples,
            'degenerate_redraws': discarded,
            'per_sample': [result['manifest'] for result in results],
            'tail_index_I_root': {str(beta): self._hill([result['i_roots'][beta] for result in results]) for beta in grid},
            'invariants_passed': not self.failed_invariants,
        }
        self._manifest("limit_manifest.json", summary)
        summary.pop('per_sample')
        return {'command': 'limit', **summary}

    # compare
    def _compare_finite(self, law: WeightLaw, grid: List[float], index: int, rng: np.random.Generator) -> Dict[str, Any]:
        config = self.config
        k = min(2, config.n)
        real = cascade_service.simulate_tree(law, config.n, rng, seed=config.seed)
        by_beta, failed = {}, []
        for beta in grid:
            table = cascade_service.partition_table(real, beta, k)
            context = f"finite replica {index} beta={beta}"
            failed += _failures(cascade_service.check_invariants(real, table), context)
            vertex_route, direct_route = cascade_service.fourier_routes(table, real, [1])
            if abs(vertex_route - direct_route) > cascade_service.invariant_tol:
                failed.append(f"{context}: Fourier routes differ by {abs(vertex_route - direct_route):.3g}")
            first, second = cascade_service.sample_vertices(table, 1, 2, rng)
            by_beta[beta] = {
                'm1': float(cascade_service.level_measures(table, 1)[0]),
                'm2': float(cascade_service.level_measures(table, 2)[0]) if k >= 2 else None,
                'scaled_z': table.scaled_z,
                'pair': first == second,
            }
        return {'by_beta': by_beta, 'failed': failed}

    def _compare_limit(self, law: WeightLaw, grid: List[float], index: int, rng: np.random.Generator) -> Dict[str, Any]:
        config = self.config
        k = min(2, config.n)
        sample = limit_service.build_limit_sample(
            law, k, config.leaf_depth, config.theta, grid[0], config.tail_tol, config.decoration, rng
        )
        by_beta = {}
        for beta in grid:
            probs = limit_service.limit_prob(sample, beta)
            first, second = limit_service.genealogy_sample(sample, beta, 1, 2, rng)
            by_beta[beta] = {
                'm1': float(probs[1][0]),
                'm2': float(probs[2][0]) if k >= 2 else None,
                'i_root': float(limit_service.compute_I(sample, beta)[0][0]),
                'unit_i_root': limit_service.unit_i_root(sample, beta),
                'pair': first == second,
            }
        return {
            'by_beta': by_beta,
            'd_root': sample.field.root_value,
            'failed': _failures(limit_service.check_invariants(sample, grid), f"limit sample {index}"),
        }

    def _superposition_test(self, count: int) -> Dict[str, Any]:
        """Direct decorated PPP versus two independent copies shifted by log 2"""
        direct_stats, merged_stats = [], []
        plain = DecorationSpec()
        for rng in replica_service.spawn_generators(self.config.seed, count, STREAM_SUPERPOSE):
            direct = limit_service.sample_ppp(1.0, _SUPERPOSE_BETA, _SUPERPOSE_TAIL_TOL, plain, rng)
            copy_a = limit_service.sample_ppp(1.0, _SUPERPOSE_BETA, _SUPERPOSE_TAIL_TOL, plain, rng)
            copy_b = limit_service.sample_ppp(1.0, _SUPERPOSE_BETA, _SUPERPOSE_TAIL_TOL, plain, rng)
            merged = limit_service.superpose(copy_a, copy_b, LOG2, LOG2)
            direct_stats.append(limit_service.center_statistics(direct, _SUPERPOSE_THRESHOLD))
            merged_stats.append(limit_service.center_statistics(merged, _SUPERPOSE_THRESHOLD))
        return {
            'min_center': stats_service.ks_two_sample([s[0] for s in direct_stats], [s[0] for s in merged_stats]).to_dict(),
            'count_below_threshold': stats_service.ks_two_sample(
                [s[1] for s in direct_stats], [s[1] for s in merged_stats]
            ).to_dict(),
        }

    async def cmd_compare(self) -> Dict[str, Any]:
        config = self.config
        if config.law.is_lattice:
            raise LatticeLawError(
                f"{config.law.label()} is a lattice law; the finite-n to limit comparison needs a non-lattice law"
            )
        config.require_strong_betas()
        law = self._boundary_law(config.law)
        grid = sorted(set(config.betas) | {config.beta_ref})

        finite, _ = await replica_service.run(
            lambda index, rng: self._compare_finite(law, grid, index, rng),
            config.replicas, config.seed, STREAM_FINITE, config.n, config.threads, label="finite-n replicas",
        )
        limit, discarded = await replica_service.run(
            lambda index, rng: self._compare_limit(law, grid, index, rng),
            config.limit_samples, config.seed, STREAM_LIMIT, 0, config.threads, label="limit samples",
        )
        for result in finite + limit:
            self.failed_invariants.extend(result['failed'])

        def column(results, beta, key):
            return [result['by_beta'][beta][key] for result in results]

        theta = limit_service.theta_from_medians(
            column(limit, config.beta_ref, 'unit_i_root'), column(finite, config.beta_ref, 'scaled_z'), config.beta_ref
        )
        critical = stats_service.ks_critical_value(len(finite), len(limit))

        tests: Dict[str, Any] = {}
        for position, beta in enumerate(grid):
            entry = {
                'depth1_mass_ks': stats_service.ks_two_sample(column(finite, beta, 'm1'), column(limit, beta, 'm1')).to_dict(),
                'ks_critical_1pct': critical,
                'tail_index_scaled_Z': self._hill(column(finite, beta, 'scaled_z')),
                'tail_index_I_root': self._hill(column(limit, beta, 'i_root')),
            }
            if config.n >= 2:
                entry['depth2_mass_ks'] = stats_service.ks_two_sample(column(finite, beta, 'm2'), column(limit, beta, 'm2')).to_dict()
            calibrated = [theta ** beta * value for value in column(limit, beta, 'unit_i_root')]
            entry['calibrated_scaled_z_ks'] = stats_service.ks_two_sample(column(finite, beta, 'scaled_z'), calibrated).to_dict()

            pairs_finite, pairs_limit = column(finite, beta, 'pair'), column(limit, beta, 'pair')
            entry['pair_coincidence'] = {
                'finite': sum(pairs_finite) / len(pairs_finite),
                'limit': sum(pairs_limit) / len(pairs_limit),
                'test': stats_service.two_proportion_test(sum(pairs_finite), len(pairs_finite), sum(pairs_limit), len(pairs_limit)).to_dict(),
            }

            stable_rng = replica_service.spawn_generators(config.seed, 1, STREAM_STABLE, position)[0]
            norm = config.decoration.norm(beta)
            stable = [
                float(limit_service.stable_cross_check(beta, config.theta * result['d_root'] * norm, 1, stable_rng)[0])
                for result in limit
            ]
            scaled = [limit_service.stable_scale(beta) * value for value in column(limit, beta, 'i_root')]
            entry['stable_cross_check_ks'] = stats_service.ks_two_sample(scaled, stable).to_dict()
            tests[str(beta)] = entry

        report = {
            'law': law.to_dict(),
            'n': config.n,
            'replicas': len(finite),
            'samples': len(limit),
            'calibrated_theta': theta,
            'beta_ref': config.beta_ref,
            'degenerate_redraws': discarded,
            'tests': tests,
            'superposition': self._superposition_test(config.limit_samples),
            'invariants_passed': not self.failed_invariants,
            'invariant_failures': self.failed_invariants[:20],
        }
        self._manifest("compare_report.json", report)
        return {'command': 'compare', **report}

    # fourier
    async def cmd_fourier(self) -> Dict[str, Any]:
        config = self.config
        sets = config.fourier_sets
        depth = max((max(index_set) for index_set in sets if index_set), default=0)
        if depth > config.n:
            raise VertexRangeError(f"character index {depth} is beyond the tree depth {config.n}")

        def label_of(index_set: List[int]) -> str:
            return ",".join(str(j) for j in index_set) if index_set else ROOT_LABEL

        def finite_job(index: int, rng: np.random.Generator) -> Dict[str, Any]:
            real = cascade_service.simulate_tree(config.law, config.n, rng, seed=config.seed)
            rows, failed = [], []
            for beta in config.betas:
                table = cascade_service.partition_table(real, beta, depth)
                for index_set in sets:
                    vertex_route, direct_route = cascade_service.fourier_routes(table, real, index_set)
                    gap = abs(vertex_route - direct_route)
                    if gap > cascade_service.invariant_tol:
                        failed.append(f"replica {index} beta={beta} F={label_of(index_set)}: Fourier routes differ by {gap:.3g}")
                    rows.append(["finite", index, beta, label_of(index_set), vertex_route, gap])
            return {'rows': rows, 'failed': failed}

        finite, _ = await replica_service.run(
            finite_job, config.replicas, config.seed, STREAM_FINITE, config.n, config.threads, label="finite-n replicas"
        )
        rows = [row for result in finite for row in result['rows']]
        for result in finite:
            self.failed_invariants.extend(result['failed'])

        strong = sorted(beta for beta in config.betas if beta > 1)
        limit_count = 0
        if strong and not config.law.is_lattice:
            law = self._boundary_law(config.law)

            def limit_job(index: int, rng: np.random.Generator) -> List[List[Any]]:
                sample = limit_service.build_limit_sample(
                    law, depth, config.leaf_depth, config.theta, strong[0], config.tail_tol, config.decoration, rng
                )
                return [
                    ["limit", index, beta, label_of(index_set), limit_service.limit_fourier(sample, beta, index_set), None]
                    for beta in strong
                    for index_set in sets
                ]

            limit, _ = await replica_service.run(
                limit_job, config.limit_samples, config.seed, STREAM_LIMIT, depth, config.threads, label="limit samples"
            )
            rows.extend(row for result in limit for row in result)
            limit_count = len(limit)
        else:
            logger.info("ℹ️ Skipping limit analogues (needs a non-lattice law and some beta > 1)")

        self._write_csv("fourier.csv", ["source", "replica", "beta", "F", "coefficient", "route_gap"], rows)
        summary = {
            'fourier_sets': [label_of(index_set) for index_set in sets],
            'replicas': len(finite),
            'limit_samples': limit_count,
            'max_route_gap': max((row[5] for row in rows if row[0] == "finite"), default=0.0),
            'invariants_passed': not self.failed_invariants,
        }
        self._manifest("fourier_manifest.json", summary)
        return {'command': 'fourier', **summary}


async def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function"""
    configure_logging()
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level)
        settings.validate()
        if args.command == "compare" and args.seed is None:
            raise UsageError("compare needs an explicit --seed so its report can be reproduced")
        config = load_config(args)
        app = CascadeToolkitApp(config, args.command)
        report = await app.run()
    except UsageError as e:
        logger.error(f"❌ {e}")
        return EXIT_USAGE
    except InvariantViolation as e:
        logger.error(f"❌ Invariant violation: {e}")
        return EXIT_INVARIANT
    except (CascadeError, ValueError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_USAGE

    print(json.dumps(report, sort_keys=True, indent=2, default=_jsonable))
    if app.failed_invariants:
        for failure in app.failed_invariants[:10]:
            logger.error(f"❌ {failure}")
        return EXIT_INVARIANT
    return EXIT_OK


def run() -> None:
    """Console entry point"""
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        print("\nStopped by user", file=sys.stderr)
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    run()
