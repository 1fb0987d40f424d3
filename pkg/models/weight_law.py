import math
from typing import Any, Dict, Literal

from pydantic import BaseModel, Field, model_validator

BETA_C = math.sqrt(2.0 * math.log(2.0))

LawKind = Literal["gaussian", "two_point", "boundary_gaussian", "gaussian_w", "point_mass", "discrete_w", "polymer"]

# Laws given through X (mean one); the remaining kinds describe the energy W directly.
X_KINDS = {"gaussian", "two_point", "polymer"}
ATOM_KINDS = {"two_point", "point_mass", "discrete_w"}

LAW_SCHEMA = {
    "gaussian": {"beta": "positive real"},
    "two_point": {"a": "positive real", "b": "positive real", "p": "probability, p*a + (1-p)*b = 1"},
    "boundary_gaussian": {},
    "gaussian_w": {"mean": "real", "std": "positive real"},
    "point_mass": {"w": "real"},
    "discrete_w": {"values": "list of reals", "probs": "list of probabilities summing to 1"},
    "polymer": {"beta": "positive real", "base": "energy law object (gaussian_w, boundary_gaussian, point_mass, discrete_w)"},
}


class WeightLaw(BaseModel):
    """Law of the cascade weight X (mean one) or of the energy increment W"""

    kind: LawKind
    params: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_params(self) -> "WeightLaw":
        p = self.params
        missing = [name for name in LAW_SCHEMA[self.kind] if name not in p]
        if missing:
            raise ValueError(f"{self.kind} law is missing params: {', '.join(missing)}")

        if self.kind in ("gaussian", "polymer") and not float(p["beta"]) > 0:
            raise ValueError("beta must be positive")
        if self.kind == "two_point":
            a, b, prob = float(p["a"]), float(p["b"]), float(p["p"])
            if a <= 0 or b <= 0 or not 0 <= prob <= 1:
                raise ValueError("two_point needs a, b > 0 and p in [0, 1]")
            if abs(prob * a + (1 - prob) * b - 1) > 1e-12:
                raise ValueError("two_point mean p*a + (1-p)*b must equal 1")
        if self.kind == "gaussian_w" and not float(p["std"]) > 0:
            raise ValueError("gaussian_w std must be positive")
        if self.kind == "point_mass" and not math.isfinite(float(p["w"])):
            raise ValueError("point_mass w must be finite")
        if self.kind == "discrete_w":
            values, probs = list(p["values"]), list(p["probs"])
            if not values or len(values) != len(probs):
                raise ValueError("discrete_w needs equally long, nonempty values and probs")
            if min(probs) < 0 or abs(math.fsum(probs) - 1) > 1e-12:
                raise ValueError("discrete_w probs must be nonnegative and sum to 1")
        if self.kind == "polymer":
            try:
                base = self.base_law()
            except Exception as e:
                raise ValueError(f"invalid polymer base: {e}") from None
            if base.is_x_law:
                raise ValueError("polymer base must be an energy law")
        return self

    # Constructors for the built-in kinds
    @classmethod
    def gaussian(cls, beta: float) -> "WeightLaw":
        return cls(kind="gaussian", params={"beta": beta})

    @classmethod
    def two_point(cls, a: float, b: float, p: float) -> "WeightLaw":
        return cls(kind="two_point", params={"a": a, "b": b, "p": p})

    @classmethod
    def boundary_gaussian(cls) -> "WeightLaw":
        return cls(kind="boundary_gaussian")

    @classmethod
    def gaussian_w(cls, mean: float, std: float) -> "WeightLaw":
        return cls(kind="gaussian_w", params={"mean": mean, "std": std})

    @classmethod
    def point_mass(cls, w: float) -> "WeightLaw":
        return cls(kind="point_mass", params={"w": w})

    @classmethod
    def discrete_w(cls, values, probs) -> "WeightLaw":
        return cls(kind="discrete_w", params={"values": [float(v) for v in values], "probs": [float(q) for q in probs]})

    @classmethod
    def polymer(cls, beta: float, base: "WeightLaw") -> "WeightLaw":
        return cls(kind="polymer", params={"beta": beta, "base": base.to_dict()})

    @property
    def is_x_law(self) -> bool:
        return self.kind in X_KINDS

    @property
    def is_lattice(self) -> bool:
        if self.kind == "polymer":
            return self.base_law().is_lattice
        return self.kind in ATOM_KINDS

    def base_law(self) -> "WeightLaw":
        base = self.params["base"]
        return base if isinstance(base, WeightLaw) else WeightLaw.from_dict(base)

    def to_dict(self) -> Dict[str, Any]:
        params = dict(self.params)
        if self.kind == "polymer":
            params["base"] = self.base_law().to_dict()
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WeightLaw":
        return cls(kind=data["kind"], params=data.get("params", {}))

    def label(self) -> str:
        if not self.params:
            return self.kind
        if self.kind == "polymer":
            return f"polymer(beta={self.params['beta']}, base={self.base_law().label()})"
        inner = ", ".join(f"{key}={value}" for key, value in sorted(self.params.items()))
        return f"{self.kind}({inner})"
