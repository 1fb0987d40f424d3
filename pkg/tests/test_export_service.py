import json

import numpy as np
import pytest

from models.weight_law import WeightLaw
from services.cascade_service import cascade_service
from services.export_service import MANIFEST_SCHEMA, ExportService

STAMP = {'seed': 11, 'config_hash': "0123456789abcdef", 'version': "1.0.0"}


@pytest.fixture
def exporter(tmp_path):
    return ExportService(str(tmp_path / "out"))


def test_resolve_creates_the_directory(exporter, tmp_path):
    path = exporter.resolve("a.csv")
    assert path == tmp_path / "out" / "a.csv"
    assert path.parent.is_dir()
    assert exporter.resolve("b.csv", str(tmp_path / "elsewhere")).parent.is_dir()


def test_csv_rows_carry_the_stamp(exporter):
    path = exporter.write_csv(
        exporter.resolve("masses.csv"),
        ["vertex", "mass"],
        [["-1,+1", 0.25], ["∅", np.float64(1.0)]],
        STAMP,
    )
    raw = path.read_bytes()
    assert raw.endswith(b"\r\n")
    lines = raw.decode("utf-8").split("\r\n")
    assert lines[0] == "vertex,mass,seed,config_hash,version"
    assert lines[1] == '"-1,+1",0.25,11,0123456789abcdef,1.0.0'
    assert lines[2] == "∅,1.0,11,0123456789abcdef,1.0.0"


def test_csv_floats_keep_full_precision(exporter):
    value = 0.1 + 0.2
    path = exporter.write_csv(exporter.resolve("p.csv"), ["x"], [[value]], STAMP)
    assert float(path.read_text(encoding="utf-8").split("\r\n")[1].split(",")[0]) == value


def test_manifest_is_sorted_json_with_schema(exporter):
    path = exporter.write_manifest(exporter.resolve("m.json"), {'zeta': 1, 'alpha': [1.5, 2.0]})
    text = path.read_text(encoding="utf-8")
    assert text.endswith("}\n")
    document = json.loads(text)
    assert document['schema'] == MANIFEST_SCHEMA
    assert list(document) == sorted(document)


def test_arrays_are_raw_little_endian_doubles(exporter):
    array = np.array([1.0, -2.5, 3.25])
    path = exporter.write_array(exporter.resolve("x.f8"), array)
    assert path.read_bytes() == array.astype("<f8").tobytes()
    assert np.array_equal(exporter.read_array(path), array)


def test_realization_file(exporter, rng):
    law = WeightLaw.polymer(1.5, WeightLaw.gaussian_w(0.0, 1.0))
    real = cascade_service.simulate_tree(law, 5, rng, seed=2**63 + 5)
    path = exporter.write_realization(exporter.resolve("r.bin"), real)
    loaded = exporter.read_realization(path)
    assert loaded.depth == 5
    assert loaded.seed == 2**63 + 5
    assert loaded.law == law
    assert np.array_equal(loaded.weights, real.weights)


def test_realization_without_seed(exporter, boundary_law, rng):
    real = cascade_service.simulate_tree(boundary_law, 2, rng)
    loaded = exporter.read_realization(exporter.write_realization(exporter.resolve("r.bin"), real))
    assert loaded.seed is None


def test_foreign_files_are_refused(exporter):
    short = exporter.resolve("short.bin")
    short.write_bytes(b"CSC")
    with pytest.raises(ValueError, match="too short"):
        exporter.read_realization(short)

    foreign = exporter.resolve("foreign.bin")
    foreign.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ValueError, match="magic"):
        exporter.read_realization(foreign)
