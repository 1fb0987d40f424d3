from dataclasses import dataclass
from typing import Any, Callable, Dict


@dataclass(frozen=True)
class LawMoments:
    """Moments of a weight law; phi(beta) = E exp(-beta W)"""
    mean_x: float
    x_log_x: float
    sigma_sq: float
    phi: Callable[[float], float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mean_x': self.mean_x,
            'x_log_x': self.x_log_x,
            'sigma_sq': self.sigma_sq,
            'phi_at_1': self.phi(1.0),
        }


@dataclass(frozen=True)
class DisorderClass:
    disorder_class: str  # 'weak', 'critical' or 'strong'
    margin: float        # E X log X - log 2
    tolerance: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'class': self.disorder_class,
            'margin': self.margin,
            'tolerance': self.tolerance,
        }


@dataclass(frozen=True)
class BoundaryResiduals:
    """Distance of an energy law from the boundary case E e^{-W} = 1/2, E W e^{-W} = 0"""
    mean_exp: float
    mean_w_exp: float

    @property
    def worst(self) -> float:
        return max(abs(self.mean_exp), abs(self.mean_w_exp))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'e_exp_minus_w_minus_half': self.mean_exp,
            'e_w_exp_minus_w': self.mean_w_exp,
        }
