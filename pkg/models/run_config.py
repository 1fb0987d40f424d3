import hashlib
import json
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from config.settings import settings
from models.decoration import DecorationSpec
from models.weight_law import WeightLaw

# Fields that never influence command outputs, so they stay out of the config hash.
_UNHASHED = {"output_dir", "threads"}


class RunConfig(BaseModel):
    law: WeightLaw = Field(default_factory=WeightLaw.boundary_gaussian)
    n: int = Field(default=20, ge=1)
    n_grid: List[int] = Field(default_factory=list)
    k: int = Field(default=1, ge=0)
    leaf_depth: int = Field(default_factory=lambda: settings.CASCADE_LEAF_DEPTH, ge=1)
    betas: List[float] = Field(default_factory=lambda: [1.5, 2.0])
    replicas: int = Field(default=200, ge=1)
    samples: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    theta: float = Field(default=1.0, gt=0)
    decoration: DecorationSpec = Field(default_factory=DecorationSpec)
    tail_tol: float = Field(default_factory=lambda: settings.CASCADE_TAIL_TOL, gt=0)
    output_dir: str = Field(default_factory=lambda: settings.CASCADE_OUTPUT_DIR)
    threads: int = Field(default_factory=lambda: settings.CASCADE_THREADS, ge=1)
    fourier_sets: List[List[int]] = Field(default_factory=lambda: [[], [1], [1, 2]])
    genealogy_draws: int = Field(default=1000, ge=1)
    beta_ref: float = Field(default=2.0, gt=1)

    @field_validator("betas")
    @classmethod
    def _betas_positive(cls, value: List[float]) -> List[float]:
        if not value or min(value) <= 0:
            raise ValueError("betas must be a nonempty list of positive reals")
        return value

    @field_validator("fourier_sets")
    @classmethod
    def _positive_indices(cls, value: List[List[int]]) -> List[List[int]]:
        for index_set in value:
            if any(j < 1 for j in index_set):
                raise ValueError("fourier character indices must be positive integers")
        return [sorted(set(index_set)) for index_set in value]

    @property
    def depths(self) -> List[int]:
        return sorted(set(self.n_grid)) if self.n_grid else [self.n]

    @property
    def limit_samples(self) -> int:
        return self.samples or self.replicas

    def require_strong_betas(self) -> None:
        """Limit commands only make sense strictly above the critical inverse temperature"""
        bad = [b for b in self.betas if b <= 1]
        if bad:
            raise ValueError(f"limit commands need betas > 1, got {bad}")

    def hashed_fields(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude=_UNHASHED)

    def config_hash(self) -> str:
        canonical = json.dumps(self.hashed_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
