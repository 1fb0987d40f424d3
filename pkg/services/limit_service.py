import logging
import math
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy import special

from cascade_types.cascade_types import InvariantReport
from cascade_types.errors import (
    DegenerateSampleError,
    DisorderDomainError,
    ExcessiveResamplingError,
    ToleranceUnachievableError,
    VertexRangeError,
)
from cascade_types.limit_types import DecoratedPPP, DerivativeField, DinftyApprox, IntervalTree, LimitSample
from config.settings import settings
from models.decoration import DecorationSpec
from models.weight_law import WeightLaw
from services.cascade_service import cascade_service
from services.disorder_service import disorder_service
from utils.vertex_paths import Vertex, flat_weight_slice, level_offset, level_signs, vertex_at

logger = logging.getLogger(__name__)

_GAMMA_CHUNK = 1 << 14
# Draws needed before the resampling rate is judged
_MIN_ATTEMPTS = 8


class LimitService:
    def __init__(self):
        self.ppp_cap = settings.CASCADE_PPP_CAP
        self.max_resample_fraction = settings.CASCADE_MAX_RESAMPLE_FRACTION
        self.invariant_tol = settings.CASCADE_INVARIANT_TOL

    # Derivative martingale field
    def approx_dinfty(self, law: WeightLaw, n: int, rng: np.random.Generator) -> DinftyApprox:
        """D_N of a fresh depth-N environment, with D_{N-1} of the same environment"""
        real = cascade_service.simulate_tree(law, n, rng)
        levels = cascade_service.energies_by_level(real)
        value = math.fsum(levels[n] * np.exp(-levels[n]))
        previous = math.fsum(levels[n - 1] * np.exp(-levels[n - 1]))
        return DinftyApprox(value=value, previous=previous, depth=n)

    def build_field(self, law: WeightLaw, k: int, n: int, rng: np.random.Generator) -> DerivativeField:
        """Positive leaf values at depth k, fresh weights above them, D(v) filled upward"""
        if k < 0 or n < k:
            raise DisorderDomainError(f"field needs 0 <= k <= N, got k={k}, N={n}")
        cascade_service.check_depth(max(n, 1))

        wanted = 1 << k
        leaves, resampled = [], 0
        while len(leaves) < wanted:
            approx = self.approx_dinfty(law, n, rng)
            if approx.positive:
                leaves.append(approx.value)
                continue
            resampled += 1
            attempts = len(leaves) + resampled
            if attempts >= _MIN_ATTEMPTS and resampled > self.max_resample_fraction * attempts:
                raise ExcessiveResamplingError(
                    f"{resampled} of {attempts} D_{n} draws were nonpositive for {law.label()}; "
                    f"raise the leaf depth or check that the law is in boundary form"
                )

        weights = disorder_service.sample_w_array(law, 2 ** (k + 1) - 2, rng)
        weights.flags.writeable = False
        energies = [np.zeros(1)]
        for level in range(1, k + 1):
            energies.append(np.repeat(energies[-1], 2) + weights[flat_weight_slice(level)])

        d_by_level = [None] * (k + 1)
        d_by_level[k] = np.asarray(leaves, dtype=float)
        for level in range(k, 0, -1):
            terms = np.exp(-weights[flat_weight_slice(level)]) * d_by_level[level]
            d_by_level[level - 1] = terms[0::2] + terms[1::2]

        if resampled:
            logger.debug(f"⚠️ Resampled {resampled} nonpositive leaf approximations")
        return DerivativeField(
            depth=k,
            leaf_depth=n,
            weights=weights,
            d_by_level=d_by_level,
            energies_by_level=energies,
            law=law,
            resampled=resampled,
        )

    def build_intervals(self, field: DerivativeField) -> IntervalTree:
        """I(v) = [left, left + e^{-H(v)} D(v)) in lexicographic order, built top-down"""
        lefts = [np.zeros(1)]
        lengths = [np.array([field.root_value])]
        for level in range(1, field.depth + 1):
            length = np.exp(-field.energies_by_level[level]) * field.d_by_level[level]
            left = np.empty_like(length)
            left[0::2] = lefts[-1]
            left[1::2] = lefts[-1] + length[0::2]
            lefts.append(left)
            lengths.append(length)
        return IntervalTree(left_by_level=lefts, length_by_level=lengths)

    def locate_vertex(self, intervals: IntervalTree, t0: float, depth: int) -> Vertex:
        """Binary descent to the |v| = depth vertex whose half-open interval holds t0"""
        if not 0 <= depth <= intervals.depth:
            raise VertexRangeError(f"depth {depth} outside 0..{intervals.depth}")
        if not 0 <= t0 < intervals.total_length:
            raise VertexRangeError(f"t0={t0} lies outside [0, {intervals.total_length})")

        offset = 0
        for level in range(1, depth + 1):
            right = 2 * offset + 1
            offset = right if t0 >= intervals.left_by_level[level][right] else right - 1
        return vertex_at(depth, offset)

    def _locate_offsets(self, intervals: IntervalTree, points: np.ndarray, depth: int) -> np.ndarray:
        lefts = intervals.left_by_level[depth]
        offsets = np.searchsorted(lefts, points, side="right") - 1
        return np.clip(offsets, 0, lefts.size - 1)

    # Decorated Poisson process
    def _tail_bound(self, gamma: float, beta: float, decoration: DecorationSpec) -> float:
        """Neglected tail in units of T^beta, the scale every contribution (T/Gamma)^beta carries"""
        log_bound = (1.0 - beta) * math.log(gamma) - math.log(beta - 1.0)
        return math.exp(log_bound) * decoration.expected_mass(beta)

    def sample_ppp(
        self,
        strip_length: float,
        beta_min: float,
        tail_tol: float,
        decoration: DecorationSpec,
        rng: np.random.Generator,
    ) -> DecoratedPPP:
        """Centers x_k = log(Gamma_k / T) with uniform t_k on [0, T), truncated by the tail bound at beta_min"""
        if strip_length <= 0:
            raise DisorderDomainError(f"strip length must be positive, got {strip_length}")
        if beta_min <= 1:
            raise DisorderDomainError(f"beta_min must exceed 1, got {beta_min}")
        if tail_tol <= 0:
            raise DisorderDomainError(f"tail tolerance must be positive, got {tail_tol}")

        # Smallest arrival time whose tail bound is below tolerance; independent of T
        log_needed = (math.log(decoration.expected_mass(beta_min)) - math.log(tail_tol * (beta_min - 1.0))) / (beta_min - 1.0)
        if log_needed > math.log(2.0 * self.ppp_cap):
            raise ToleranceUnachievableError(
                f"tail tolerance {tail_tol} at beta_min={beta_min} needs about e^{log_needed:.1f} centers, "
                f"above the cap {self.ppp_cap}"
            )

        chunks, total, last = [], 0, 0.0
        while True:
            gammas = last + np.cumsum(rng.exponential(1.0, _GAMMA_CHUNK))
            stop = int(np.searchsorted(np.log(gammas), log_needed, side="right"))
            if stop < gammas.size:
                chunks.append(gammas[: stop + 1])
                total += stop + 1
                break
            chunks.append(gammas)
            total += gammas.size
            last = float(gammas[-1])
            if total > self.ppp_cap:
                raise ToleranceUnachievableError(f"Poisson truncation passed the cap {self.ppp_cap} before reaching {tail_tol}")
        if total > self.ppp_cap:
            raise ToleranceUnachievableError(f"Poisson truncation needs {total} centers, above the cap {self.ppp_cap}")

        gammas = np.concatenate(chunks)
        x = np.log(gammas / strip_length)
        t = rng.uniform(0.0, strip_length, total)
        while np.unique(t).size < total:
            t = rng.uniform(0.0, strip_length, total)
        values, pointers = decoration.sample(total, rng)

        return DecoratedPPP(
            strip_length=strip_length,
            x=x,
            t=t,
            decoration_values=values,
            decoration_pointers=pointers,
            beta_min=beta_min,
            tail_tol=tail_tol,
            tail_bound=self._tail_bound(float(gammas[-1]), beta_min, decoration),
            decoration=decoration,
        )

    def superpose(self, ppp_a: DecoratedPPP, ppp_b: DecoratedPPP, shift_a: float, shift_b: float) -> DecoratedPPP:
        """Merge two decorated processes on a common strip, shifting their x-coordinates"""
        if ppp_a.strip_length != ppp_b.strip_length:
            raise ValueError("superposed processes must share the strip length")
        x = np.concatenate((ppp_a.x + shift_a, ppp_b.x + shift_b))
        order = np.argsort(x, kind="stable")

        # Reorder the CSR clusters along with their centers
        starts = np.concatenate((ppp_a.decoration_pointers[:-1], ppp_b.decoration_pointers[:-1] + ppp_a.decoration_values.size))
        sizes = np.concatenate((np.diff(ppp_a.decoration_pointers), np.diff(ppp_b.decoration_pointers)))[order]
        pointers = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        gather = np.arange(pointers[-1]) + np.repeat(starts[order] - pointers[:-1], sizes)
        values = np.concatenate((ppp_a.decoration_values, ppp_b.decoration_values))[gather]

        beta = min(ppp_a.beta_min, ppp_b.beta_min)
        return DecoratedPPP(
            strip_length=ppp_a.strip_length,
            x=x[order],
            t=np.concatenate((ppp_a.t, ppp_b.t))[order],
            decoration_values=values,
            decoration_pointers=pointers,
            beta_min=beta,
            tail_tol=max(ppp_a.tail_tol, ppp_b.tail_tol),
            tail_bound=math.exp(-beta * shift_a) * ppp_a.tail_bound + math.exp(-beta * shift_b) * ppp_b.tail_bound,
            decoration=ppp_a.decoration,
        )

    def center_statistics(self, ppp: DecoratedPPP, threshold: float) -> Tuple[float, int]:
        """(lowest center, number of centers with x <= threshold)"""
        return float(ppp.x.min()), int(np.count_nonzero(ppp.x <= threshold))

    def build_limit_sample(
        self,
        law: WeightLaw,
        k: int,
        n: int,
        theta: float,
        beta_min: float,
        tail_tol: float,
        decoration: DecorationSpec,
        rng: np.random.Generator,
    ) -> LimitSample:
        if theta <= 0:
            raise DisorderDomainError(f"theta must be positive, got {theta}")
        field = self.build_field(law, k, n, rng)
        intervals = self.build_intervals(field)
        ppp = self.sample_ppp(theta * field.root_value, beta_min, tail_tol, decoration, rng)
        logger.debug(f"✓ Built limit sample with {ppp.count} centers (D(root)={field.root_value:.4g})")
        return LimitSample(field=field, intervals=intervals, ppp=ppp, theta=theta)

    # Limit measures
    def _unit_positions(self, sample: LimitSample) -> np.ndarray:
        """Center t-coordinates mapped back to [0, D(root))"""
        upper = np.nextafter(sample.intervals.total_length, 0.0)
        return np.minimum(sample.ppp.t / sample.theta, upper)

    def compute_I(self, sample: LimitSample, beta: float) -> List[np.ndarray]:
        """I_{1/beta}(v) for every |v| <= k, one array per level in lexicographic order"""
        if beta <= 1:
            raise DisorderDomainError(f"the Poisson series needs beta > 1, got {beta}")
        cached = sample.cached_i(beta)
        if cached is not None:
            return cached

        contributions = np.exp(sample.ppp.log_contributions(beta))
        leaves = self._locate_offsets(sample.intervals, self._unit_positions(sample), sample.depth)
        levels = [None] * (sample.depth + 1)
        levels[sample.depth] = np.bincount(leaves, weights=contributions, minlength=1 << sample.depth)
        for level in range(sample.depth, 0, -1):
            levels[level - 1] = levels[level][0::2] + levels[level][1::2]

        sample.store_i(beta, levels)
        return levels

    def i_value(self, sample: LimitSample, beta: float, vertex: Vertex) -> float:
        if len(vertex) > sample.depth:
            raise VertexRangeError(f"vertex at depth {len(vertex)} is beyond the sample depth {sample.depth}")
        return float(self.compute_I(sample, beta)[len(vertex)][level_offset(vertex)])

    def limit_prob(self, sample: LimitSample, beta: float) -> List[np.ndarray]:
        """prob_{inf,beta}(Delta(v)) = I(v) / I(root), per level"""
        levels = self.compute_I(sample, beta)
        root = float(levels[0][0])
        if not root > 0:
            raise DegenerateSampleError("I(root) vanishes; resample the limit object")
        return [level / root for level in levels]

    def limit_fourier(self, sample: LimitSample, beta: float, indices: Iterable[int]) -> float:
        indices = sorted(set(indices))
        if not indices:
            return 1.0
        m = indices[-1]
        if m > sample.depth:
            raise VertexRangeError(f"character index {m} is beyond the sample depth {sample.depth}")
        chars = np.prod(level_signs(m)[:, [j - 1 for j in indices]], axis=1).astype(float)
        return math.fsum(chars * self.limit_prob(sample, beta)[m])

    def _log_rn(self, sample: LimitSample, beta1: float, beta2: float) -> np.ndarray:
        log_i1 = math.log(self.compute_I(sample, beta1)[0][0])
        log_i2 = math.log(self.compute_I(sample, beta2)[0][0])
        return sample.ppp.log_contributions(beta1) - sample.ppp.log_contributions(beta2) + log_i2 - log_i1

    def rn_derivative(self, sample: LimitSample, t0: float, beta1: float, beta2: float) -> float:
        """d nu'_{beta1} / d nu'_{beta2} at the center sitting at t0"""
        matches = np.flatnonzero(sample.ppp.t == t0)
        if matches.size == 0:
            raise DisorderDomainError(f"t0={t0} is not the coordinate of a Poisson center")
        if beta1 == beta2:
            return 1.0
        return float(np.exp(self._log_rn(sample, beta1, beta2)[matches[0]]))

    def rn_derivative_table(self, sample: LimitSample, beta1: float, beta2: float, top: int = 10) -> List[Dict[str, float]]:
        """RN derivative at the `top` lowest centers"""
        order = np.argsort(sample.ppp.x, kind="stable")[:top]
        log_rn = self._log_rn(sample, beta1, beta2)
        return [{'t': float(sample.ppp.t[i]), 'x': float(sample.ppp.x[i]), 'rn': float(np.exp(log_rn[i]))} for i in order]

    def genealogy_sample(self, sample: LimitSample, beta: float, depth: int, m: int, rng: np.random.Generator) -> List[Vertex]:
        """m vertices at the given depth, each under a center picked with probability proportional to C_beta"""
        if not 0 <= depth <= sample.depth:
            raise VertexRangeError(f"depth {depth} outside 0..{sample.depth}")
        if sample.ppp.count == 0:
            raise DegenerateSampleError("no Poisson centers to sample from")
        log_c = sample.ppp.log_contributions(beta)
        weights = np.exp(log_c - log_c.max())
        picks = rng.choice(weights.size, size=m, p=weights / weights.sum())
        positions = self._unit_positions(sample)[picks]
        offsets = self._locate_offsets(sample.intervals, positions, depth)
        return [vertex_at(depth, int(offset)) for offset in offsets]

    def stable_cross_check(self, beta: float, mass: float, m: int, rng: np.random.Generator) -> np.ndarray:
        """m draws of a 1/beta-stable subordinator at time `mass` (Laplace exponent mass * lambda^{1/beta})"""
        if beta <= 1 or mass <= 0:
            raise DisorderDomainError(f"stable draws need beta > 1 and mass > 0, got beta={beta}, mass={mass}")
        alpha = 1.0 / beta
        u = rng.uniform(0.0, math.pi, m)
        e = rng.exponential(1.0, m)
        stable = (
            np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
            * (np.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
        )
        return mass ** beta * stable

    def stable_scale(self, beta: float) -> float:
        """Gamma(1 - 1/beta)^{-beta}, mapping I(root) onto the subordinator"""
        return math.exp(-beta * special.gammaln(1.0 - 1.0 / beta))

    def tv_continuity_probe(self, sample: LimitSample, beta_grid: Sequence[float]) -> List[float]:
        """Total variation between consecutive depth-k cylinder laws along the grid"""
        grid = list(beta_grid)
        if grid != sorted(grid) or any(beta <= 1 for beta in grid):
            raise DisorderDomainError("beta grid must be sorted and lie in (1, inf)")
        probs = [self.limit_prob(sample, beta)[sample.depth] for beta in grid]
        return [0.5 * math.fsum(np.abs(p - q)) for p, q in zip(probs, probs[1:])]

    def frozen_limit(self, sample: LimitSample, betas: Iterable[float]) -> List[Dict[str, float]]:
        """I_{1/beta}(root)^{1/beta} next to its large-beta limit e^{-min x}"""
        frozen = math.exp(-float(sample.ppp.x.min()))
        return [
            {'beta': beta, 'value': float(self.compute_I(sample, beta)[0][0]) ** (1.0 / beta), 'frozen': frozen}
            for beta in betas
        ]

    def localization_profile(self, sample: LimitSample, betas: Iterable[float]) -> List[float]:
        return [float(self.limit_prob(sample, beta)[sample.depth].max()) for beta in betas]

    def calibrate_theta(self, samples: Sequence[LimitSample], finite_scaled_z: Sequence[float], beta_ref: float) -> float:
        """theta matching the median of I_{1/beta}(root) to the median of n^{3 beta/2} Z_n(beta)"""
        if not samples:
            raise ValueError("calibration needs limit samples")
        return self.theta_from_medians([self.unit_i_root(sample, beta_ref) for sample in samples], finite_scaled_z, beta_ref)

    def unit_i_root(self, sample: LimitSample, beta: float) -> float:
        """I_{1/beta}(root) rescaled to theta = 1; I scales as theta^beta"""
        return float(self.compute_I(sample, beta)[0][0]) / sample.theta ** beta

    def theta_from_medians(self, unit_i_roots: Sequence[float], finite_scaled_z: Sequence[float], beta_ref: float) -> float:
        if not len(unit_i_roots) or not len(finite_scaled_z):
            raise ValueError("calibration needs limit and finite-n values")
        ratio = float(np.median(finite_scaled_z)) / float(np.median(unit_i_roots))
        theta = ratio ** (1.0 / beta_ref)
        logger.info(f"✓ Calibrated theta = {theta:.6g} at beta = {beta_ref}")
        return theta

    def check_invariants(self, sample: LimitSample, betas: Sequence[float]) -> List[InvariantReport]:
        tol = self.invariant_tol
        field, intervals = sample.field, sample.intervals

        recursion = 0.0
        for level in range(field.depth, 0, -1):
            terms = np.exp(-field.weights[flat_weight_slice(level)]) * field.d_by_level[level]
            parent = field.d_by_level[level - 1]
            recursion = max(recursion, float(np.max(np.abs(terms[0::2] + terms[1::2] - parent) / np.abs(parent))))

        tiling = 0.0
        for level in range(1, intervals.depth + 1):
            length, left = intervals.length_by_level[level], intervals.left_by_level[level]
            parent = intervals.length_by_level[level - 1]
            tiling = max(
                tiling,
                float(np.max(np.abs(length[0::2] + length[1::2] - parent) / parent)),
                float(np.max(np.abs(left[1::2] - left[0::2] - length[0::2]) / parent)),
            )
        tiling = max(tiling, abs(math.fsum(intervals.length_by_level[-1]) / intervals.total_length - 1.0))

        grid = sorted(set(float(beta) for beta in betas))
        while len(grid) < 3:
            grid.append(grid[-1] + 1.0)

        additivity, unity = 0.0, 0.0
        for beta in grid:
            levels = self.compute_I(sample, beta)
            for level in range(1, len(levels)):
                pairs = levels[level][0::2] + levels[level][1::2]
                additivity = max(additivity, float(np.max(np.abs(pairs - levels[level - 1]))) / float(levels[0][0]))
            unity = max(unity, *(abs(math.fsum(p) - 1.0) for p in self.limit_prob(sample, beta)))

        b1, b2, b3 = grid[0], grid[1], grid[2]
        rn12, rn21 = np.exp(self._log_rn(sample, b1, b2)), np.exp(self._log_rn(sample, b2, b1))
        rn23, rn13 = np.exp(self._log_rn(sample, b2, b3)), np.exp(self._log_rn(sample, b1, b3))
        reciprocity = float(np.max(np.abs(rn12 * rn21 - 1.0)))
        chain = float(np.max(np.abs(rn12 * rn23 / rn13 - 1.0)))

        half = max(1, sample.ppp.count // 2)
        head = np.exp(sample.ppp.log_contributions(sample.ppp.beta_min)[:half])
        truncation = abs(float(self.compute_I(sample, sample.ppp.beta_min)[0][0]) - math.fsum(head))
        truncation /= sample.ppp.strip_length ** sample.ppp.beta_min

        return [
            InvariantReport('field_recursion', recursion, tol, field.depth),
            InvariantReport('interval_tiling', tiling, tol, intervals.depth),
            InvariantReport('i_additivity', additivity, tol, len(grid)),
            InvariantReport('limit_partition_of_unity', unity, tol, len(grid)),
            InvariantReport('rn_reciprocity', reciprocity, tol, sample.ppp.count),
            InvariantReport('rn_chain_rule', chain, tol, sample.ppp.count),
            InvariantReport('truncation_soundness', truncation, 10 * sample.ppp.tail_tol, half),
        ]

# Global limit service instance
limit_service = LimitService()
