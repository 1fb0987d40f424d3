import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from cascade_types.errors import VertexRangeError
from models.decoration import DecorationSpec
from models.weight_law import WeightLaw
from utils.vertex_paths import Vertex, heap_index, level_offset


@dataclass(frozen=True)
class DinftyApprox:
    """D_N from a fresh depth-N realization, with D_{N-1} as a convergence diagnostic"""
    value: float
    previous: float
    depth: int

    @property
    def positive(self) -> bool:
        return self.value > 0


@dataclass(frozen=True)
class DerivativeField:
    """Tree-indexed derivative field {(W_v, D(v)) : |v| <= depth}"""
    depth: int
    leaf_depth: int
    weights: np.ndarray
    d_by_level: List[np.ndarray]
    energies_by_level: List[np.ndarray]
    law: WeightLaw
    resampled: int = 0

    def _check(self, vertex: Vertex) -> None:
        if len(vertex) > self.depth:
            raise VertexRangeError(f"vertex at depth {len(vertex)} is beyond the field depth {self.depth}")

    def d(self, vertex: Vertex) -> float:
        self._check(vertex)
        return float(self.d_by_level[len(vertex)][level_offset(vertex)])

    def w(self, vertex: Vertex) -> float:
        self._check(vertex)
        if not vertex:
            raise VertexRangeError("the root carries no weight")
        return float(self.weights[heap_index(vertex) - 2])

    @property
    def root_value(self) -> float:
        return float(self.d_by_level[0][0])


@dataclass(frozen=True)
class IntervalTree:
    """Nested half-open intervals I(v) = [left, left + length) tiling [0, D(root))"""
    left_by_level: List[np.ndarray]
    length_by_level: List[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.left_by_level) - 1

    @property
    def total_length(self) -> float:
        return float(self.length_by_level[0][0])

    def interval(self, vertex: Vertex) -> Tuple[float, float]:
        if len(vertex) > self.depth:
            raise VertexRangeError(f"vertex at depth {len(vertex)} is beyond the interval depth {self.depth}")
        offset = level_offset(vertex)
        return float(self.left_by_level[len(vertex)][offset]), float(self.length_by_level[len(vertex)][offset])


@dataclass(frozen=True)
class DecoratedPPP:
    """Poisson centers (x, t) of intensity e^x dx dt on [0, T), each with a decoration cluster.

    Decorations are stored in CSR layout: offsets of center i are
    decoration_values[decoration_pointers[i]:decoration_pointers[i + 1]].
    Centers are ordered by increasing x.
    """
    strip_length: float
    x: np.ndarray
    t: np.ndarray
    decoration_values: np.ndarray
    decoration_pointers: np.ndarray
    beta_min: float
    tail_tol: float
    tail_bound: float
    decoration: DecorationSpec = field(default_factory=DecorationSpec)

    @property
    def count(self) -> int:
        return int(self.x.size)

    def decoration_of(self, index: int) -> np.ndarray:
        return self.decoration_values[self.decoration_pointers[index]:self.decoration_pointers[index + 1]]

    def log_contributions(self, beta: float) -> np.ndarray:
        """log C_beta for every center: -beta x + log sum_y exp(-beta y)"""
        masses = np.add.reduceat(np.exp(-beta * self.decoration_values), self.decoration_pointers[:-1])
        return -beta * self.x + np.log(masses)

    def truncation_report(self) -> Dict[str, Any]:
        return {
            'count': self.count,
            'tail_bound': self.tail_bound,
            'tail_tol': self.tail_tol,
            'beta_min': self.beta_min,
        }


@dataclass
class LimitSample:
    """One draw of the limit objects on a common probability space.

    Immutable after construction apart from the memo of I-values per beta.
    """
    field: DerivativeField
    intervals: IntervalTree
    ppp: DecoratedPPP
    theta: float
    _i_cache: Dict[float, List[np.ndarray]] = field(default_factory=dict, repr=False)

    @property
    def depth(self) -> int:
        return self.field.depth

    def cached_i(self, beta: float):
        return self._i_cache.get(float(beta))

    def store_i(self, beta: float, levels: List[np.ndarray]) -> None:
        self._i_cache[float(beta)] = levels

    def manifest(self) -> Dict[str, Any]:
        return {
            'k': self.field.depth,
            'N': self.field.leaf_depth,
            'theta': self.theta,
            'd_root': self.field.root_value,
            'resampled_leaves': self.field.resampled,
            'truncation': self.ppp.truncation_report(),
            'strip_length': self.ppp.strip_length,
            'log_strip_length': math.log(self.ppp.strip_length),
        }
