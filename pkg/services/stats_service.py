import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from cascade_types.errors import DisorderDomainError
from cascade_types.stats_types import ConvergenceTrace, TailEstimate, TestResult, TracePoint
from config.settings import settings

logger = logging.getLogger(__name__)

_Z95 = 1.959963984540054
_BAND_LEVEL = 0.95
_BOOTSTRAP_SEED = 0


class StatsService:
    def __init__(self):
        self.hill_fraction = settings.CASCADE_HILL_FRACTION
        self.bootstrap_resamples = settings.CASCADE_BOOTSTRAP_RESAMPLES

    def hill_index(self, samples: Sequence[float], top_fraction: Optional[float] = None) -> TailEstimate:
        """Hill estimator of the tail index on the top ceil(top_fraction * n) order statistics"""
        top_fraction = self.hill_fraction if top_fraction is None else top_fraction
        values = np.sort(np.asarray(samples, dtype=float))[::-1]
        if values.size < 100:
            raise DisorderDomainError(f"Hill estimation needs at least 100 samples, got {values.size}")
        if not np.all(values > 0):
            raise DisorderDomainError("Hill estimation needs positive samples")
        if not 0 < top_fraction <= 0.5:
            raise DisorderDomainError(f"top fraction must lie in (0, 0.5], got {top_fraction}")

        k = math.ceil(top_fraction * values.size)
        logs = np.log(values)
        index = 1.0 / float(np.mean(logs[:k] - logs[k]))
        spread = _Z95 / math.sqrt(k)
        return TailEstimate(index=index, k_used=k, ci_low=index * (1.0 - spread), ci_high=index * (1.0 + spread))

    def ks_two_sample(self, a: Sequence[float], b: Sequence[float]) -> TestResult:
        if len(a) == 0 or len(b) == 0:
            raise ValueError("KS test needs two nonempty samples")
        result = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float), method="asymp")
        p_value = float(min(max(result.pvalue, 0.0), 1.0))
        return TestResult(
            statistic=float(result.statistic),
            p_approx=p_value,
            reject_at_1pct=p_value < 0.01,
            sample_sizes=(len(a), len(b)),
        )

    def ks_critical_value(self, n1: int, n2: int, level: float = 0.01) -> float:
        """Asymptotic two-sample KS critical value at the given level"""
        return float(stats.kstwobign.isf(level)) * math.sqrt((n1 + n2) / (n1 * n2))

    def bootstrap_band(
        self,
        values: Sequence[float],
        resamples: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[float, float]:
        """Percentile bootstrap band of the median"""
        data = np.asarray(values, dtype=float)
        if data.size < 2 or np.all(data == data[0]):
            median = float(np.median(data))
            return median, median
        result = stats.bootstrap(
            (data,),
            np.median,
            n_resamples=resamples or self.bootstrap_resamples,
            confidence_level=_BAND_LEVEL,
            method="percentile",
            random_state=rng if rng is not None else np.random.default_rng(_BOOTSTRAP_SEED),
        )
        return float(result.confidence_interval.low), float(result.confidence_interval.high)

    def convergence_trace(
        self,
        values_by_n: Dict[int, Sequence[float]],
        target: float,
        rng: Optional[np.random.Generator] = None,
    ) -> ConvergenceTrace:
        """Median and bootstrap band per depth, and whether the medians close in on the target"""
        if len(values_by_n) < 2:
            raise ValueError("a convergence trace needs at least two depths")
        rng = rng if rng is not None else np.random.default_rng(_BOOTSTRAP_SEED)

        points = []
        for n in sorted(values_by_n):
            data = np.sort(np.asarray(values_by_n[n], dtype=float))
            median = float(np.median(data))
            low, high = self.bootstrap_band(data, rng=rng)
            points.append(TracePoint(n=n, median=median, band_low=low, band_high=high, deviation=abs(median - target)))

        monotone = all(later.deviation <= earlier.deviation for earlier, later in zip(points, points[1:]))
        return ConvergenceTrace(target=target, points=points, monotone_approach=monotone)

    def chi_square_occupancy(self, counts: Sequence[int], probs: Sequence[float]) -> TestResult:
        """Pearson goodness of fit of observed cell counts against cell probabilities"""
        counts = np.asarray(counts, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if counts.shape != probs.shape:
            raise ValueError("counts and probabilities must have the same length")
        total = counts.sum()
        live = probs > 0
        if np.any(counts[~live] > 0):
            return TestResult(statistic=math.inf, p_approx=0.0, reject_at_1pct=True, sample_sizes=(int(total), int(live.sum())))
        if live.sum() < 2:
            return TestResult(statistic=0.0, p_approx=1.0, reject_at_1pct=False, sample_sizes=(int(total), int(live.sum())))

        expected = probs[live] / probs[live].sum() * total
        result = stats.chisquare(counts[live], f_exp=expected)
        p_value = float(result.pvalue)
        return TestResult(
            statistic=float(result.statistic),
            p_approx=p_value,
            reject_at_1pct=p_value < 0.01,
            sample_sizes=(int(total), int(live.sum())),
        )

    def two_proportion_test(self, hits_a: int, n_a: int, hits_b: int, n_b: int) -> TestResult:
        """Pooled two-proportion z test"""
        if n_a <= 0 or n_b <= 0:
            raise ValueError("both groups need at least one trial")
        pooled = (hits_a + hits_b) / (n_a + n_b)
        scale = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b))
        if scale == 0:
            return TestResult(statistic=0.0, p_approx=1.0, reject_at_1pct=False, sample_sizes=(n_a, n_b))
        z = abs(hits_a / n_a - hits_b / n_b) / scale
        p_value = float(2.0 * stats.norm.sf(z))
        return TestResult(statistic=z, p_approx=p_value, reject_at_1pct=p_value < 0.01, sample_sizes=(n_a, n_b))

    def poisson_interval(self, mean: float, level: float = 0.99) -> Tuple[float, float]:
        low, high = stats.poisson.interval(level, mean)
        return float(low), float(high)

# Global stats service instance
stats_service = StatsService()
