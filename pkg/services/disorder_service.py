import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np
from scipy import integrate, optimize, special, stats

from cascade_types.disorder_types import BoundaryResiduals, DisorderClass, LawMoments
from cascade_types.errors import DisorderDomainError, MomentEvaluationError, NumericalError
from config.settings import settings
from models.weight_law import BETA_C, WeightLaw

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)
ALPHA_BRACKET = (1e-6, 1.0 - 1e-6)


@dataclass(frozen=True)
class _NormalEnergy:
    mean: float
    std: float


@dataclass(frozen=True)
class _AtomEnergy:
    values: Tuple[float, ...]
    probs: Tuple[float, ...]


_Energy = Union[_NormalEnergy, _AtomEnergy]


def _atoms(values, probs) -> _AtomEnergy:
    """Merge equal atoms and drop null ones, keeping ascending order"""
    merged = {}
    for value, prob in zip(values, probs):
        if prob > 0:
            merged[float(value)] = merged.get(float(value), 0.0) + float(prob)
    keys = sorted(merged)
    return _AtomEnergy(tuple(keys), tuple(merged[key] for key in keys))


class DisorderService:
    def __init__(self):
        self.quad_tol = settings.CASCADE_QUAD_TOL
        self.critical_tol = settings.CASCADE_CRITICAL_TOL
        self.alpha_tol = settings.CASCADE_ALPHA_TOL

    # Energy representation: every built-in law is a normal or finite-atom law of W,
    # where W = -log X for laws given through X.
    def _energy(self, law: WeightLaw) -> _Energy:
        p = law.params
        if law.kind == "gaussian":
            beta = float(p["beta"])
            return _NormalEnergy(beta * beta / 2.0, beta)
        if law.kind == "boundary_gaussian":
            return _NormalEnergy(BETA_C * BETA_C, BETA_C)
        if law.kind == "gaussian_w":
            return _NormalEnergy(float(p["mean"]), float(p["std"]))
        if law.kind == "two_point":
            prob = float(p["p"])
            return _atoms((-math.log(float(p["a"])), -math.log(float(p["b"]))), (prob, 1.0 - prob))
        if law.kind == "point_mass":
            return _atoms((float(p["w"]),), (1.0,))
        if law.kind == "discrete_w":
            return _atoms(p["values"], p["probs"])

        # polymer: X = exp(-beta W) / phi(beta), so -log X = beta W + log phi(beta)
        beta = float(p["beta"])
        base = self._energy(law.base_law())
        return self._affine(base, beta, self._log_phi(base, beta))

    def _affine(self, energy: _Energy, scale: float, shift: float) -> _Energy:
        if isinstance(energy, _NormalEnergy):
            return _NormalEnergy(scale * energy.mean + shift, scale * energy.std)
        return _atoms([scale * w + shift for w in energy.values], energy.probs)

    def _log_phi(self, energy: _Energy, beta: float) -> float:
        if isinstance(energy, _NormalEnergy):
            return -beta * energy.mean + 0.5 * (beta * energy.std) ** 2
        values, probs = np.asarray(energy.values), np.asarray(energy.probs)
        return float(special.logsumexp(-beta * values, b=probs))

    def _tilted_mean(self, energy: _Energy, beta: float) -> float:
        """E(W e^{-beta W}) / E e^{-beta W}"""
        if isinstance(energy, _NormalEnergy):
            return energy.mean - beta * energy.std ** 2
        values, probs = np.asarray(energy.values), np.asarray(energy.probs)
        log_w = np.log(probs) - beta * values
        tilt = np.exp(log_w - special.logsumexp(log_w))
        return math.fsum(tilt * values)

    def _to_law(self, energy: _Energy) -> WeightLaw:
        if isinstance(energy, _NormalEnergy):
            if abs(energy.std - BETA_C) <= 1e-12 and abs(energy.mean - BETA_C * BETA_C) <= 1e-12:
                return WeightLaw.boundary_gaussian()
            return WeightLaw.gaussian_w(energy.mean, energy.std)
        if len(energy.values) == 1:
            return WeightLaw.point_mass(energy.values[0])
        return WeightLaw.discrete_w(energy.values, energy.probs)

    def log_phi(self, law: WeightLaw, beta: float) -> float:
        """log E exp(-beta W)"""
        return self._log_phi(self._energy(law), beta)

    def expect(self, law: WeightLaw, g: Callable[[float], float], label: str) -> float:
        """E g(W): finite sum for atom laws, adaptive quadrature for gaussian laws"""
        energy = self._energy(law)
        if isinstance(energy, _AtomEnergy):
            return math.fsum(prob * g(w) for w, prob in zip(energy.values, energy.probs))

        def integrand(z: float) -> float:
            return g(energy.mean + energy.std * z) * stats.norm.pdf(z)

        result = integrate.quad(integrand, -np.inf, np.inf, epsabs=self.quad_tol, epsrel=1e-12, limit=200, full_output=1)
        value, abserr = result[0], result[1]
        if not math.isfinite(value) or (len(result) > 3 and abserr > 10 * self.quad_tol):
            message = result[3] if len(result) > 3 else "non-finite value"
            raise MomentEvaluationError(f"quadrature of {label} did not converge (abserr={abserr:.3g}): {message}")
        return value

    def compute_moments(self, law: WeightLaw, closed_form: bool = True) -> LawMoments:
        """Moments of X = exp(-W) / phi(1), the mean-one weight attached to the law"""
        energy = self._energy(law)
        log_phi_1 = self._log_phi(energy, 1.0)

        def phi(beta: float) -> float:
            return math.exp(self._log_phi(energy, beta))

        if closed_form and isinstance(energy, _NormalEnergy):
            s2 = energy.std ** 2
            return LawMoments(mean_x=1.0, x_log_x=s2 / 2.0, sigma_sq=(LOG2 - s2 / 2.0) ** 2 + s2, phi=phi)

        def x_of(w: float) -> float:
            return math.exp(-w - log_phi_1)

        def log_x_of(w: float) -> float:
            return -w - log_phi_1

        mean_x = self.expect(law, x_of, "E X")
        x_log_x = self.expect(law, lambda w: x_of(w) * log_x_of(w), "E X log X")
        sigma_sq = self.expect(law, lambda w: x_of(w) * (LOG2 - log_x_of(w)) ** 2, "E X (log 2 - log X)^2")
        return LawMoments(mean_x=mean_x, x_log_x=x_log_x, sigma_sq=sigma_sq, phi=phi)

    def classify_disorder(self, law: WeightLaw, tol: float | None = None) -> DisorderClass:
        tol = self.critical_tol if tol is None else tol
        margin = self.compute_moments(law).x_log_x - LOG2

        if abs(margin) <= tol:
            disorder_class = "critical"
        elif margin < 0:
            disorder_class = "weak"
        else:
            disorder_class = "strong"
        return DisorderClass(disorder_class=disorder_class, margin=margin, tolerance=tol)

    def alpha_objective(self, law: WeightLaw, alpha: float) -> float:
        """E(Y log Y) with Y = X^alpha / E X^alpha"""
        energy = self._energy(law)
        return -alpha * self._tilted_mean(energy, alpha) - self._log_phi(energy, alpha)

    def solve_alpha(self, law: WeightLaw, tol: float | None = None) -> float:
        tol = self.alpha_tol if tol is None else tol
        regime = self.classify_disorder(law)
        if regime.disorder_class != "strong":
            raise DisorderDomainError(f"{law.label()} is {regime.disorder_class}, alpha exists only under strong disorder")

        def excess(alpha: float) -> float:
            return self.alpha_objective(law, alpha) - LOG2

        try:
            alpha = optimize.bisect(excess, *ALPHA_BRACKET, xtol=1e-15, rtol=1e-15, maxiter=200)
        except (ValueError, RuntimeError) as e:
            raise NumericalError(f"alpha bisection failed on {ALPHA_BRACKET} for {law.label()}: {e}") from e

        residual = abs(excess(alpha))
        if residual >= tol:
            raise NumericalError(f"alpha residual {residual:.3g} exceeds tolerance {tol:.3g}")
        if not excess(alpha / 2.0) < 0:
            raise NumericalError("alpha objective is not below log 2 at alpha / 2")

        logger.debug(f"✓ Solved alpha = {alpha:.12f} for {law.label()} (residual {residual:.2e})")
        return alpha

    def x_to_w(self, law: WeightLaw, alpha: float) -> WeightLaw:
        """Law of W = log 2 + log E X^alpha - alpha log X"""
        if not 0 < alpha <= 1:
            raise DisorderDomainError(f"alpha must lie in (0, 1], got {alpha}")
        energy = self._energy(law)
        # With X = e^{-V} / phi(1): W = alpha V + log(2 phi(alpha))
        log_phi_alpha = self._log_phi(energy, alpha)
        if not math.isfinite(log_phi_alpha):
            raise MomentEvaluationError(f"E X^alpha is not finite for {law.label()} at alpha={alpha}")
        return self._to_law(self._affine(energy, alpha, LOG2 + log_phi_alpha))

    def boundary_residuals(self, law: WeightLaw, quadrature: bool = False) -> BoundaryResiduals:
        energy = self._energy(law)
        if quadrature:
            mean_exp = self.expect(law, lambda w: math.exp(-w), "E exp(-W)")
            mean_w_exp = self.expect(law, lambda w: w * math.exp(-w), "E W exp(-W)")
        else:
            phi_1 = math.exp(self._log_phi(energy, 1.0))
            mean_exp = phi_1
            mean_w_exp = phi_1 * self._tilted_mean(energy, 1.0)
        return BoundaryResiduals(mean_exp=mean_exp - 0.5, mean_w_exp=mean_w_exp)

    def is_boundary(self, law: WeightLaw, tol: float = 1e-8) -> bool:
        return not law.is_x_law and self.boundary_residuals(law).worst < tol

    def find_critical_beta(self, law: WeightLaw) -> float:
        """beta_c where beta^{-1} log(2 phi(beta)) is stationary"""
        if law.is_x_law:
            raise DisorderDomainError(f"{law.label()} is a weight law; the critical beta needs an energy law")
        energy = self._energy(law)
        if isinstance(energy, _NormalEnergy):
            return math.sqrt(2.0 * LOG2) / energy.std

        def stationarity(beta: float) -> float:
            return -beta * self._tilted_mean(energy, beta) - LOG2 - self._log_phi(energy, beta)

        try:
            return optimize.brentq(stationarity, 1e-6, 1e3, xtol=1e-14, maxiter=500)
        except ValueError as e:
            raise NumericalError(f"no critical inverse temperature for {law.label()}: {e}") from e

    def boundary_normalize(self, law: WeightLaw) -> WeightLaw:
        """beta_c W + log(2 phi(beta_c)), the boundary-case energy"""
        beta_c = self.find_critical_beta(law)
        energy = self._energy(law)
        return self._to_law(self._affine(energy, beta_c, LOG2 + self._log_phi(energy, beta_c)))

    def size_biased_moment(self, law: WeightLaw) -> float:
        """E (W^2 + log_+((1 + W) e^{-W})) e^{-W}

        (1 + w) e^{-w} <= 1 for every real w, so the log_+ term vanishes and E W^2 e^{-W} is left.
        Gaussian energies are tilted first: E W^2 e^{-W} = phi(1) E W'^2 with W' ~ N(mu - s^2, s^2).
        """
        energy = self._energy(law)
        if isinstance(energy, _NormalEnergy):
            tilted = self._to_law(_NormalEnergy(energy.mean - energy.std ** 2, energy.std))
            return math.exp(self._log_phi(energy, 1.0)) * self.expect(tilted, lambda w: w * w, "E W'^2")
        return self.expect(law, lambda w: w * w * math.exp(-w), "E W^2 exp(-W)")

    def size_biased_moment_finite(self, law: WeightLaw) -> bool:
        try:
            return math.isfinite(self.size_biased_moment(law))
        except (MomentEvaluationError, OverflowError) as e:
            logger.warning(f"⚠️ Size-biased moment of {law.label()} is not finite: {e}")
            return False

    def sample_w_array(self, law: WeightLaw, size: int, rng: np.random.Generator) -> np.ndarray:
        energy = self._energy(law)
        if isinstance(energy, _NormalEnergy):
            return rng.normal(energy.mean, energy.std, size)
        if len(energy.values) == 1:
            return np.full(size, energy.values[0])
        values = np.asarray(energy.values)
        return values[rng.choice(values.size, size=size, p=np.asarray(energy.probs))]

    def sample_w(self, law: WeightLaw, rng: np.random.Generator) -> float:
        return float(self.sample_w_array(law, 1, rng)[0])

# Global disorder service instance
disorder_service = DisorderService()
