import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

VERSION = "1.0.0"


def _env_number(name: str, default, cast=float):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw)
    except (ValueError, TypeError):
        print(f"Warning: Invalid {name}: {raw!r}, using default {default}")
        return default


class Settings:
    # Simulation limits
    CASCADE_DEPTH_CAP = _env_number('CASCADE_DEPTH_CAP', 26, int)
    CASCADE_PPP_CAP = _env_number('CASCADE_PPP_CAP', 10_000_000, int)
    CASCADE_LEAF_DEPTH = _env_number('CASCADE_LEAF_DEPTH', 18, int)
    CASCADE_MAX_RESAMPLE_FRACTION = _env_number('CASCADE_MAX_RESAMPLE_FRACTION', 0.5)

    # Numerical tolerances
    CASCADE_CRITICAL_TOL = _env_number('CASCADE_CRITICAL_TOL', 1e-9)
    CASCADE_QUAD_TOL = _env_number('CASCADE_QUAD_TOL', 1e-10)
    CASCADE_ALPHA_TOL = _env_number('CASCADE_ALPHA_TOL', 1e-10)
    CASCADE_TAIL_TOL = _env_number('CASCADE_TAIL_TOL', 1e-3)
    CASCADE_INVARIANT_TOL = _env_number('CASCADE_INVARIANT_TOL', 1e-12)

    # Statistics
    CASCADE_BOOTSTRAP_RESAMPLES = _env_number('CASCADE_BOOTSTRAP_RESAMPLES', 500, int)
    CASCADE_HILL_FRACTION = _env_number('CASCADE_HILL_FRACTION', 0.1)

    # Execution and output
    CASCADE_THREADS = _env_number('CASCADE_THREADS', 1, int)
    CASCADE_OUTPUT_DIR = os.getenv('CASCADE_OUTPUT_DIR', 'output')
    CASCADE_LOG_LEVEL = os.getenv('CASCADE_LOG_LEVEL', 'INFO')

    # Validation
    @classmethod
    def validate(cls):
        """Validate that every setting lies in its admissible range"""
        checks = [
            ('CASCADE_DEPTH_CAP', 1 <= cls.CASCADE_DEPTH_CAP <= 30),
            ('CASCADE_PPP_CAP', cls.CASCADE_PPP_CAP >= 1),
            ('CASCADE_LEAF_DEPTH', 1 <= cls.CASCADE_LEAF_DEPTH <= cls.CASCADE_DEPTH_CAP),
            ('CASCADE_MAX_RESAMPLE_FRACTION', 0 < cls.CASCADE_MAX_RESAMPLE_FRACTION < 1),
            ('CASCADE_CRITICAL_TOL', cls.CASCADE_CRITICAL_TOL > 0),
            ('CASCADE_QUAD_TOL', cls.CASCADE_QUAD_TOL > 0),
            ('CASCADE_ALPHA_TOL', cls.CASCADE_ALPHA_TOL > 0),
            ('CASCADE_TAIL_TOL', cls.CASCADE_TAIL_TOL > 0),
            ('CASCADE_INVARIANT_TOL', cls.CASCADE_INVARIANT_TOL > 0),
            ('CASCADE_BOOTSTRAP_RESAMPLES', cls.CASCADE_BOOTSTRAP_RESAMPLES >= 1),
            ('CASCADE_HILL_FRACTION', 0 < cls.CASCADE_HILL_FRACTION <= 0.5),
            ('CASCADE_THREADS', cls.CASCADE_THREADS >= 1),
        ]

        invalid = [name for name, ok in checks if not ok]
        if invalid:
            raise ValueError(f"Invalid settings: {', '.join(invalid)}")

        return True

# Create settings instance
settings = Settings()
