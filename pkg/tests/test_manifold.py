import math

import numpy as np
import pytest
from scipy.special import iv

from riesz_flow import (ConfigError, ValidationError, build_sphere,
                        load_geometry, save_geometry, sphere_volume,
                        validate_geometry)


def test_sphere_volume_values():
    assert sphere_volume(1) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_volume(2) == pytest.approx(4 * math.pi, rel=1e-15)


def test_circle_equal_partition():
    # equal weights 2*pi/N and the antipodal chord of the unit circle
    g = build_sphere(1, 8, "uniform_angle")
    assert np.allclose(g.weights, math.pi / 4, rtol=0, atol=1e-16)
    assert g.chordal[0, 4] == pytest.approx(2.0, abs=1e-14)
    assert g.weights.sum() == pytest.approx(2 * math.pi, rel=1e-15)


def test_fibonacci_normalization():
    g = build_sphere(2, 1000, "fibonacci")
    assert g.weights.sum() == pytest.approx(4 * math.pi, rel=1e-13)
    assert np.abs(np.linalg.norm(g.nodes, axis=1) - 1).max() <= 1e-14


def test_equal_area_normalization():
    g = build_sphere(2, 347, "equal_area")
    assert g.weights.sum() == pytest.approx(4 * math.pi, rel=1e-13)
    assert np.abs(np.linalg.norm(g.nodes, axis=1) - 1).max() <= 1e-14
    assert not validate_geometry(g)


@pytest.mark.parametrize("n,N,scheme", [
    (1, 64, "fibonacci"),
    (2, 64, "uniform_angle"),
    (1, 7, "uniform_angle"),
    (3, 64, None),
])
def test_bad_configurations_rejected(n, N, scheme):
    with pytest.raises(ConfigError):
        build_sphere(n, N, scheme)


def test_invariants_pass_for_builds(geo128):
    assert validate_geometry(geo128) == []
    # sphere relation chordal <= geodesic <= (pi/2) chordal
    assert (geo128.chordal - geo128.geodesic).max() <= 1e-12
    assert (geo128.geodesic - 0.5 * math.pi * geo128.chordal).max() <= 1e-12


def test_quadrature_consistency_circle():
    # smooth periodic integrand against the Bessel-function value
    exact = 2 * math.pi * iv(0, 1.0)
    errs = []
    for N in (8, 16, 32):
        g = build_sphere(1, N)
        th = np.arctan2(g.nodes[:, 1], g.nodes[:, 0])
        errs.append(abs(g.integrate(np.exp(np.cos(th))) - exact))
    assert errs[0] > errs[1] > errs[2] or errs[2] < 1e-14
    g = build_sphere(1, 16)
    assert g.integrate(np.ones(16)) == pytest.approx(2 * math.pi, rel=1e-15)


@pytest.mark.parametrize("scheme", ["fibonacci", "equal_area"])
def test_quadrature_consistency_s2(scheme):
    exact = 4 * math.pi * math.sinh(1.0)
    errs = []
    for N in (100, 400, 1600):
        g = build_sphere(2, N, scheme)
        errs.append(abs(g.integrate(np.exp(g.nodes[:, 2])) - exact) / exact)
    assert errs[2] < errs[0]
    assert errs[2] < 1e-3


def test_save_load_roundtrip(tmp_path, geo64):
    path = tmp_path / "c.geom"
    save_geometry(geo64, path)
    back = load_geometry(path)
    assert back.dim == geo64.dim
    assert np.array_equal(back.nodes, geo64.nodes)
    assert np.array_equal(back.weights, geo64.weights)
    assert np.array_equal(back.chordal, geo64.chordal)
    assert np.array_equal(back.geodesic, geo64.geodesic)
    assert back.unit_sphere and back.uniform_circle
    assert back.scheme == "uniform_angle"


def test_s2_save_load_roundtrip(tmp_path):
    g = build_sphere(2, 200, "fibonacci")
    path = tmp_path / "s2.geom"
    save_geometry(g, path)
    back = load_geometry(path)
    assert back.dim == 2 and back.unit_sphere and not back.uniform_circle
    assert np.array_equal(back.nodes, g.nodes)
    assert np.array_equal(back.geodesic, g.geodesic)
    assert back.scheme == "fibonacci"


def test_load_recomputes_missing_distances(tmp_path, geo64):
    path = tmp_path / "nodist.geom"
    save_geometry(geo64, path, include_distances=False)
    back = load_geometry(path)
    # recomputed chordal and great-circle tables must match the stored builder's
    assert np.abs(back.chordal - geo64.chordal).max() <= 1e-14
    assert np.abs(back.geodesic - geo64.geodesic).max() <= 1e-12


def test_load_nonsphere_falls_back_to_chordal(tmp_path):
    rng = np.random.default_rng(0)
    nodes = rng.normal(size=(12, 3)) * 2.0
    with open(tmp_path / "cloud.geom", "w") as fh:
        fh.write("dim 2\n")
        fh.write(f"nodes 12 3\n")
        for row in nodes:
            fh.write(" ".join(format(v, '.17g') for v in row) + "\n")
        fh.write("weights 12\n")
        for _ in range(12):
            fh.write("0.5\n")
    g = load_geometry(tmp_path / "cloud.geom")
    assert not g.unit_sphere
    assert np.array_equal(g.geodesic, g.chordal)


def test_negative_weight_reported_with_index(tmp_path, geo64):
    path = tmp_path / "bad.geom"
    save_geometry(geo64, path)
    text = path.read_text().splitlines()
    # weights block starts right after the nodes block
    start = next(i for i, ln in enumerate(text) if ln.startswith("weights")) + 1
    text[start + 5] = "-1.0"
    path.write_text("\n".join(text))
    with pytest.raises(ValidationError, match=r"\[5\]"):
        load_geometry(path)


def test_asymmetric_distance_table_rejected(tmp_path, geo64):
    path = tmp_path / "asym.geom"
    save_geometry(geo64, path)
    text = path.read_text().splitlines()
    start = next(i for i, ln in enumerate(text) if ln.startswith("chordal")) + 1
    row = text[start].split()
    row[1] = format(float(row[1]) + 0.1, ".17g")
    text[start] = " ".join(row)
    path.write_text("\n".join(text))
    with pytest.raises(ValidationError, match="asymmetric"):
        load_geometry(path)


def test_malformed_file_rejected(tmp_path):
    p = tmp_path / "junk.geom"
    p.write_text("dim 1\nnodes 4 2\n1 0\n")
    with pytest.raises(ValidationError):
        load_geometry(p)
