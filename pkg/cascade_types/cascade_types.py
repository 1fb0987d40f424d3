import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from cascade_types.errors import VertexRangeError
from models.weight_law import WeightLaw
from utils.vertex_paths import Vertex, level_offset


@dataclass(frozen=True)
class CascadeRealization:
    """One sampled environment {W_v : 1 <= |v| <= n}, stored flat in heap order"""
    depth: int
    weights: np.ndarray
    law: WeightLaw
    seed: Optional[int] = None

    def __post_init__(self):
        expected = 2 ** (self.depth + 1) - 2
        if self.weights.shape != (expected,):
            raise ValueError(f"depth {self.depth} needs {expected} weights, got {self.weights.shape}")
        self.weights.flags.writeable = False

    @property
    def leaf_count(self) -> int:
        return 2 ** self.depth


@dataclass(frozen=True)
class PartitionTable:
    """Per-vertex partition functions Z_n(beta; v) for |v| <= level, kept in log form"""
    beta: float
    depth: int
    level: int
    log_z_by_level: List[np.ndarray]
    energies_by_level: List[np.ndarray]
    log_phi: float
    min_energy: float
    d_n: float

    def _check(self, vertex: Vertex) -> None:
        if len(vertex) > self.level:
            raise VertexRangeError(f"vertex at depth {len(vertex)} is beyond the stored level {self.level}")

    def log_z(self, vertex: Vertex) -> float:
        self._check(vertex)
        return float(self.log_z_by_level[len(vertex)][level_offset(vertex)])

    def z(self, vertex: Vertex) -> float:
        return math.exp(self.log_z(vertex))

    def energy(self, vertex: Vertex) -> float:
        self._check(vertex)
        return float(self.energies_by_level[len(vertex)][level_offset(vertex)])

    @property
    def log_z_root(self) -> float:
        return float(self.log_z_by_level[0][0])

    @property
    def z_root(self) -> float:
        return math.exp(self.log_z_root)

    @property
    def log_m_n(self) -> float:
        return self.log_z_root - self.depth * (math.log(2.0) + self.log_phi)

    @property
    def m_n(self) -> float:
        return math.exp(self.log_m_n)

    @property
    def scaled_z(self) -> float:
        """n^{3 beta / 2} Z_n(beta), the centered partition function"""
        return math.exp(1.5 * self.beta * math.log(self.depth) + self.log_z_root)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'beta': self.beta,
            'n': self.depth,
            'Z': self.z_root,
            'M': self.m_n,
            'D': self.d_n,
            'min_energy': self.min_energy,
            'scaled_Z': self.scaled_z,
        }


@dataclass(frozen=True)
class InvariantReport:
    name: str
    max_residual: float
    tolerance: float
    checked: int = 0
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'max_residual': self.max_residual,
            'tolerance': self.tolerance,
            'checked': self.checked,
            'passed': self.passed,
            **self.details,
        }
