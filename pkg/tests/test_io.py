import numpy as np
import pytest

from riesz_flow import ValidationError
from riesz_flow.io import (load_field, read_diagnostics_csv, save_field,
                           write_json_atomic)


def test_field_roundtrip(tmp_path):
    vals = np.linspace(0.1, 2.0, 17)
    p = tmp_path / "f.field"
    save_field(p, vals, t=1.25)
    back, t = load_field(p)
    assert t == 1.25
    assert np.array_equal(back, vals)
    save_field(p, vals)
    back, t = load_field(p)
    assert t is None


def test_field_count_mismatch(tmp_path):
    p = tmp_path / "bad.field"
    p.write_text("N 3\n1.0\n2.0\n")
    with pytest.raises(ValidationError):
        load_field(p)
    p.write_text("N 0\n")
    with pytest.raises(ValidationError):
        load_field(p)


def test_csv_guard(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("t,V\n")
    with pytest.raises(ValidationError):
        read_diagnostics_csv(p)


def test_atomic_json(tmp_path):
    p = tmp_path / "m.json"
    write_json_atomic(p, {"b": 1, "a": [1, 2]})
    import json

    with open(p) as fh:
        assert json.load(fh) == {"b": 1, "a": [1, 2]}
    # no stray temp files after the write
    assert [q.name for q in tmp_path.iterdir()] == ["m.json"]
