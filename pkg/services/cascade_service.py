import logging
import math
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy import special

from cascade_types.cascade_types import CascadeRealization, InvariantReport, PartitionTable
from cascade_types.errors import (
    DegenerateRealizationError,
    DisorderDomainError,
    InvariantViolation,
    MomentEvaluationError,
    ResourceCapError,
    VertexRangeError,
)
from config.settings import settings
from models.weight_law import WeightLaw
from services.disorder_service import LOG2, disorder_service
from utils.vertex_paths import Vertex, flat_weight_slice, level_signs, vertex_at

logger = logging.getLogger(__name__)


class CascadeService:
    def __init__(self):
        self.depth_cap = settings.CASCADE_DEPTH_CAP
        self.invariant_tol = settings.CASCADE_INVARIANT_TOL

    def check_depth(self, n: int) -> None:
        if n < 1:
            raise DisorderDomainError(f"tree depth must be at least 1, got {n}")
        if n > self.depth_cap:
            megabytes = (2 ** (n + 1)) * 8 * 2 / 2**20
            raise ResourceCapError(
                f"depth {n} exceeds the cap {self.depth_cap}: 2^{n} leaves need about {megabytes:.0f} MiB "
                f"(raise CASCADE_DEPTH_CAP or lower n)"
            )

    def simulate_tree(self, law: WeightLaw, n: int, rng: np.random.Generator, seed: Optional[int] = None) -> CascadeRealization:
        """Sample the 2^{n+1} - 2 i.i.d. weights of a depth-n environment"""
        self.check_depth(n)
        weights = disorder_service.sample_w_array(law, 2 ** (n + 1) - 2, rng)
        if not np.all(np.isfinite(weights)):
            raise MomentEvaluationError(f"non-finite weight drawn from {law.label()}")
        return CascadeRealization(depth=n, weights=weights, law=law, seed=seed)

    def energies_by_level(self, real: CascadeRealization, upto: Optional[int] = None) -> List[np.ndarray]:
        """H(v) for every level 0..upto, each in lexicographic order, by prefix sums"""
        upto = real.depth if upto is None else upto
        levels = [np.zeros(1)]
        for level in range(1, upto + 1):
            levels.append(np.repeat(levels[-1], 2) + real.weights[flat_weight_slice(level)])
        return levels

    def level_energies(self, real: CascadeRealization, level: int) -> np.ndarray:
        if not 0 <= level <= real.depth:
            raise VertexRangeError(f"level {level} outside 0..{real.depth}")
        return self.energies_by_level(real, level)[level]

    def energies(self, real: CascadeRealization) -> np.ndarray:
        """H(s) for every leaf |s| = n, in lexicographic leaf order"""
        return self.level_energies(real, real.depth)

    def path_energy(self, real: CascadeRealization, leaf: Vertex) -> float:
        index, total = 1, 0.0
        for step in leaf:
            index = 2 * index + (1 if step > 0 else 0)
            total += float(real.weights[index - 2])
        return total

    @staticmethod
    def _derivative_sum(energies: np.ndarray) -> float:
        return math.fsum(energies * np.exp(-energies))

    def derivative_martingale(self, real: CascadeRealization, level: Optional[int] = None) -> float:
        """D = sum_{|s| = level} H(s) exp(-H(s)), compensated"""
        level = real.depth if level is None else level
        return self._derivative_sum(self.level_energies(real, level))

    def partition_table(self, real: CascadeRealization, beta: float, k: int) -> PartitionTable:
        """One upward log-domain sweep for Z_n(beta; v), |v| <= k, plus M_n, D_n and the minimum energy"""
        if beta <= 0:
            raise DisorderDomainError(f"beta must be positive, got {beta}")
        if not 0 <= k <= real.depth:
            raise VertexRangeError(f"stored level {k} outside 0..{real.depth}")

        log_phi = disorder_service.log_phi(real.law, beta)
        if not math.isfinite(log_phi):
            raise MomentEvaluationError(f"phi({beta}) is unavailable for {real.law.label()}")

        energies = self.energies_by_level(real)
        log_z = np.zeros(real.leaf_count)
        stored = {real.depth: log_z} if k == real.depth else {}
        for level in range(real.depth, 0, -1):
            terms = -beta * real.weights[flat_weight_slice(level)] + log_z
            log_z = np.logaddexp(terms[0::2], terms[1::2])
            if level - 1 <= k:
                stored[level - 1] = log_z

        leaves = energies[real.depth]
        return PartitionTable(
            beta=beta,
            depth=real.depth,
            level=k,
            log_z_by_level=[stored[j] for j in range(k + 1)],
            energies_by_level=energies[: k + 1],
            log_phi=log_phi,
            min_energy=float(leaves.min()),
            d_n=self._derivative_sum(leaves),
        )

    def level_measures(self, table: PartitionTable, level: int) -> np.ndarray:
        """prob_{n,beta}(Delta(v)) for every |v| = level"""
        if not 0 <= level <= table.level:
            raise VertexRangeError(f"level {level} is beyond the stored level {table.level}")
        return np.exp(-table.beta * table.energies_by_level[level] + table.log_z_by_level[level] - table.log_z_root)

    def vertex_measure(self, table: PartitionTable, real: CascadeRealization, vertex: Vertex) -> float:
        """prob_{n,beta}(Delta(v)) = e^{-beta H(v)} Z_n(beta; v) / Z_n(beta)"""
        if table.depth != real.depth:
            raise ValueError("partition table and realization depths differ")
        return math.exp(-table.beta * table.energy(vertex) + table.log_z(vertex) - table.log_z_root)

    def cascade_mass(self, table: PartitionTable, vertex: Vertex) -> float:
        """Unnormalized mu_{n,beta}(Delta(v)) = (2 phi(beta))^{-n} e^{-beta H(v)} Z_n(beta; v)"""
        log_norm = table.depth * (LOG2 + table.log_phi)
        return math.exp(-log_norm - table.beta * table.energy(vertex) + table.log_z(vertex))

    def extremal_points(self, real: CascadeRealization) -> np.ndarray:
        """Sorted atoms H(s) - (3/2) log n + log D_n of the centered extremal process"""
        leaves = self.energies(real)
        d_n = self._derivative_sum(leaves)
        if d_n <= 0:
            raise DegenerateRealizationError(f"D_n = {d_n:.4g} is not positive; discard this replica")
        return np.sort(leaves - 1.5 * math.log(real.depth) + math.log(d_n))

    def fourier_routes(self, table: PartitionTable, real: CascadeRealization, indices: Iterable[int]) -> Tuple[float, float]:
        """(vertex route, direct leaf route) for the Fourier coefficient of prob_{n,beta} at chi_F"""
        indices = sorted(set(indices))
        if not indices:
            return 1.0, 1.0
        m = indices[-1]
        if m > table.level:
            raise VertexRangeError(f"character index {m} is beyond the stored level {table.level}")

        chars = np.prod(level_signs(m)[:, [j - 1 for j in indices]], axis=1).astype(float)
        vertex_route = math.fsum(chars * self.level_measures(table, m))

        log_weights = -table.beta * self.energies(real)
        shifted = np.exp(log_weights - log_weights.max())
        leaf_chars = chars[np.arange(real.leaf_count) >> (real.depth - m)]
        direct_route = math.fsum(leaf_chars * shifted) / math.fsum(shifted)
        return vertex_route, direct_route

    def fourier_coeff(self, table: PartitionTable, real: CascadeRealization, beta: float, indices: Iterable[int]) -> float:
        if beta != table.beta:
            raise ValueError(f"table was built at beta={table.beta}, not {beta}")
        vertex_route, direct_route = self.fourier_routes(table, real, indices)
        if abs(vertex_route - direct_route) > self.invariant_tol:
            raise InvariantViolation(f"Fourier routes disagree by {abs(vertex_route - direct_route):.3g}")
        return vertex_route

    def sample_vertices(self, table: PartitionTable, level: int, m: int, rng: np.random.Generator) -> List[Vertex]:
        """m i.i.d. depth-`level` vertices drawn from prob_{n,beta}"""
        probs = self.level_measures(table, level)
        offsets = rng.choice(probs.size, size=m, p=probs / probs.sum())
        return [vertex_at(level, int(offset)) for offset in offsets]

    def aidekon_shi_ratio(self, real: CascadeRealization) -> float:
        """sqrt(n) M_n / D_n at beta = 1"""
        table = self.partition_table(real, 1.0, 0)
        if table.d_n <= 0:
            raise DegenerateRealizationError(f"D_n = {table.d_n:.4g} is not positive; discard this replica")
        return math.sqrt(real.depth) * table.m_n / table.d_n

    def freezing_ratio(self, real: CascadeRealization, betas: Iterable[float]) -> List[float]:
        """Gamma(1 - 1/beta)^{-1} Z_n(beta)^{1/beta} / e^{-min H}, tending to 1 as beta grows"""
        leaves = self.energies(real)
        min_energy = float(leaves.min())
        ratios = []
        for beta in betas:
            if beta <= 1:
                raise DisorderDomainError(f"freezing ratio needs beta > 1, got {beta}")
            log_z = float(special.logsumexp(-beta * leaves))
            ratios.append(math.exp(log_z / beta + min_energy - special.gammaln(1.0 - 1.0 / beta)))
        return ratios

    def check_invariants(self, real: CascadeRealization, table: PartitionTable) -> List[InvariantReport]:
        tol = self.invariant_tol
        beta, log_z_root = table.beta, table.log_z_root

        additivity, checked = 0.0, 0
        for level in range(table.level):
            terms = -beta * real.weights[flat_weight_slice(level + 1)] + table.log_z_by_level[level + 1]
            parent = table.log_z_by_level[level]
            rebuilt = np.exp(terms[0::2] - parent) + np.exp(terms[1::2] - parent)
            additivity = max(additivity, float(np.max(np.abs(rebuilt - 1.0))))
            checked += parent.size

        unity = max(abs(math.fsum(self.level_measures(table, level)) - 1.0) for level in range(table.level + 1))

        lower = -beta * table.min_energy
        upper = table.depth * LOG2 - beta * table.min_energy
        bounds = max(0.0, lower - log_z_root, log_z_root - upper)

        skeleton = log_z_root / beta + table.min_energy
        skeleton_excess = max(0.0, -skeleton, skeleton - table.depth * LOG2 / beta)
        scale = max(1.0, abs(log_z_root))

        return [
            InvariantReport('z_additivity', additivity, tol, checked),
            InvariantReport('partition_of_unity', unity, tol, table.level + 1),
            InvariantReport('z_bounds', bounds / scale, tol, 1),
            InvariantReport('free_energy_skeleton', skeleton_excess / scale, tol, 1, {'value': skeleton}),
        ]

# Global cascade service instance
cascade_service = CascadeService()
