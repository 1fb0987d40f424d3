import csv
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

from cascade_types.cascade_types import CascadeRealization
from config.settings import settings
from models.weight_law import WeightLaw

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1
REALIZATION_MAGIC = b"CSCD"
REALIZATION_VERSION = 1
STAMP_COLUMNS = ("seed", "config_hash", "version")

# magic, format version, depth, has-seed flag, seed, law JSON length
_HEADER = struct.Struct("<4sHIBQI")


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


class ExportService:
    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = Path(output_dir or settings.CASCADE_OUTPUT_DIR)

    def resolve(self, name: str, output_dir: Optional[str] = None) -> Path:
        root = Path(output_dir) if output_dir else self.output_dir
        root.mkdir(parents=True, exist_ok=True)
        return root / name

    def write_csv(self, path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], stamp: Dict[str, Any]) -> Path:
        """UTF-8 CSV with RFC 4180 quoting; every row ends with the (seed, config_hash, version) stamp"""
        stamp_values = [stamp[column] for column in STAMP_COLUMNS]
        count = 0
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
            writer.writerow(list(header) + list(STAMP_COLUMNS))
            for row in rows:
                writer.writerow([_cell(value) for value in row] + stamp_values)
                count += 1
        logger.info(f"✓ Wrote {count} rows to {path}")
        return path

    def write_manifest(self, path: Path, payload: Dict[str, Any]) -> Path:
        document = {"schema": MANIFEST_SCHEMA, **payload}
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False))
            handle.write("\n")
        logger.info(f"✓ Wrote manifest {path}")
        return path

    def write_array(self, path: Path, array: np.ndarray) -> Path:
        """Raw little-endian float64, no header"""
        np.ascontiguousarray(array, dtype="<f8").tofile(path)
        return path

    def read_array(self, path: Path) -> np.ndarray:
        return np.fromfile(path, dtype="<f8")

    def write_realization(self, path: Path, real: CascadeRealization) -> Path:
        law_json = json.dumps(real.law.to_dict(), sort_keys=True).encode("utf-8")
        header = _HEADER.pack(
            REALIZATION_MAGIC,
            REALIZATION_VERSION,
            real.depth,
            0 if real.seed is None else 1,
            real.seed or 0,
            len(law_json),
        )
        with open(path, "wb") as handle:
            handle.write(header)
            handle.write(law_json)
            handle.write(np.ascontiguousarray(real.weights, dtype="<f8").tobytes())
        return path

    def read_realization(self, path: Path) -> CascadeRealization:
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size:
            raise ValueError(f"{path} is too short to hold a realization header")
        magic, version, depth, has_seed, seed, law_length = _HEADER.unpack_from(data)
        if magic != REALIZATION_MAGIC:
            raise ValueError(f"{path} is not a realization file (magic {magic!r})")
        if version != REALIZATION_VERSION:
            raise ValueError(f"unsupported realization format version {version}")

        start = _HEADER.size
        law = WeightLaw.from_dict(json.loads(data[start:start + law_length].decode("utf-8")))
        weights = np.frombuffer(data, dtype="<f8", offset=start + law_length).astype(float)
        return CascadeRealization(depth=depth, weights=weights, law=law, seed=seed if has_seed else None)

# Global export service instance
export_service = ExportService()
