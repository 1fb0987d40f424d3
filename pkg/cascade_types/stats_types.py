from dataclasses import dataclass
from typing import Any, Dict, List, Tuple


@dataclass(frozen=True)
class TailEstimate:
    index: float
    k_used: int
    ci_low: float
    ci_high: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'index': self.index,
            'k_used': self.k_used,
            'ci_low': self.ci_low,
            'ci_high': self.ci_high,
        }


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_approx: float
    reject_at_1pct: bool
    sample_sizes: Tuple[int, int]

    __test__ = False  # not a pytest class

    def to_dict(self) -> Dict[str, Any]:
        return {
            'statistic': self.statistic,
            'p_approx': self.p_approx,
            'reject_at_1pct': self.reject_at_1pct,
            'sample_sizes': list(self.sample_sizes),
        }


@dataclass(frozen=True)
class TracePoint:
    n: int
    median: float
    band_low: float
    band_high: float
    deviation: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'median': self.median,
            'band_low': self.band_low,
            'band_high': self.band_high,
            'deviation': self.deviation,
        }


@dataclass(frozen=True)
class ConvergenceTrace:
    target: float
    points: List[TracePoint]
    monotone_approach: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            'target': self.target,
            'monotone_approach': self.monotone_approach,
            'points': [point.to_dict() for point in self.points],
        }
