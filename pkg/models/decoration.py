import math
from typing import Any, Dict, Literal, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

# Fixed stream for Monte Carlo norms of random decorations, so reports stay reproducible.
_NORM_SEED = 20_140_947
_NORM_DRAWS = 100_000


class DecorationSpec(BaseModel):
    """Sampler for the decoration point process attached to each Poisson center.

    Offsets are nonnegative and every cluster contains the center itself (offset 0).
    """

    kind: Literal["dirac", "atoms", "poisson_exponential"] = "dirac"
    params: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_params(self) -> "DecorationSpec":
        if self.kind == "atoms":
            offsets = [float(y) for y in self.params.get("offsets", [])]
            if not offsets or min(offsets) < 0 or 0.0 not in offsets:
                raise ValueError("atoms decoration needs nonnegative offsets including 0")
        if self.kind == "poisson_exponential":
            if float(self.params.get("rate", -1)) < 0 or float(self.params.get("scale", 0)) <= 0:
                raise ValueError("poisson_exponential needs rate >= 0 and scale > 0")
        return self

    @property
    def is_dirac(self) -> bool:
        return self.kind == "dirac"

    def sample(self, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Draw `count` clusters; returns (flat offsets, pointers) in CSR layout"""
        if self.kind == "dirac":
            return np.zeros(count), np.arange(count + 1, dtype=np.int64)

        if self.kind == "atoms":
            offsets = np.asarray(sorted(float(y) for y in self.params["offsets"]))
            values = np.tile(offsets, count)
            return values, np.arange(count + 1, dtype=np.int64) * offsets.size

        sizes = 1 + rng.poisson(float(self.params["rate"]), count)
        pointers = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        values = rng.exponential(float(self.params["scale"]), int(pointers[-1]))
        values[pointers[:-1]] = 0.0
        return values, pointers

    def expected_mass(self, beta: float) -> float:
        """E sum_y exp(-beta y)"""
        if self.kind == "dirac":
            return 1.0
        if self.kind == "atoms":
            return math.fsum(math.exp(-beta * float(y)) for y in self.params["offsets"])
        rate, scale = float(self.params["rate"]), float(self.params["scale"])
        return 1.0 + rate / (1.0 + beta * scale)

    def norm(self, beta: float) -> float:
        """E (sum_y exp(-beta y))^(1/beta), the decoration's l^beta norm"""
        if self.kind == "dirac":
            return 1.0
        if self.kind == "atoms":
            return self.expected_mass(beta) ** (1.0 / beta)

        values, pointers = self.sample(_NORM_DRAWS, np.random.default_rng(_NORM_SEED))
        masses = np.add.reduceat(np.exp(-beta * values), pointers[:-1])
        return float(np.mean(masses ** (1.0 / beta)))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "params": dict(self.params)}
