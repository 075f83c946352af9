"""Discretized compact manifolds: nodes, quadrature weights, distance tables.

Unit circles and 2-spheres are built exactly; anything else is loaded from a
geometry file and carries no intrinsic metric beyond its distance table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import ConfigError, ValidationError

SCHEMES = {1: ("uniform_angle",), 2: ("fibonacci", "equal_area")}

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def sphere_volume(n: int) -> float:
    """Surface measure of the unit n-sphere: 2π for S¹, 4π for S²."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


def ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


@dataclass(frozen=True)
class Geometry:
    """Immutable discretization: share freely across workers after construction."""

    dim: int
    nodes: np.ndarray        # (N, ambient) coordinates
    weights: np.ndarray      # (N,) positive quadrature weights
    chordal: np.ndarray      # (N, N) ambient Euclidean distances
    geodesic: np.ndarray     # (N, N) intrinsic distances
    total_volume: float
    unit_sphere: bool        # True for exact S^n builds (nodes unit-norm)
    uniform_circle: bool = False  # True for the uniform_angle S¹ builder
    scheme: str = ""         # builder scheme name, empty for loaded geometries

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, f: np.ndarray) -> float:
        return _accel.weighted_pow_sum(self.weights, np.asarray(f, dtype=float), 1.0)


def _finalize(dim, nodes, weights, volume, unit_sphere, uniform_circle=False,
              scheme=""):
    nodes = np.ascontiguousarray(nodes, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    weights = weights * (volume / weights.sum())  # constant integrates exactly
    chordal = _accel.pairwise_dist(nodes)
    if unit_sphere:
        geodesic = np.arccos(_accel.pairwise_gram(nodes))
        np.fill_diagonal(geodesic, 0.0)
    else:
        geodesic = chordal.copy()
    return Geometry(dim, nodes, weights, chordal, geodesic, float(volume),
                    unit_sphere, uniform_circle, scheme)


def build_sphere(n: int, N: int, scheme: str | None = None) -> Geometry:
    """Discretize the unit n-sphere with N nodes.

    Parameters
    ----------
    n : 1 or 2.
    N : node count, at least 8.
    scheme : "uniform_angle" for S¹; "fibonacci" (default) or "equal_area"
        for S². Weights are equal and rescaled so they sum to the exact
        sphere volume.
    """
    if n not in SCHEMES:
        raise ConfigError(f"unsupported sphere dimension n={n} (expected 1 or 2)")
    if N < 8:
        raise ConfigError(f"node count N={N} is below the minimum of 8")
    if scheme is None:
        scheme = SCHEMES[n][0]
    if scheme not in SCHEMES[n]:
        raise ConfigError(f"scheme {scheme!r} is not valid for S^{n}; "
                          f"choose from {SCHEMES[n]}")
    vol = sphere_volume(n)
    if n == 1:
        theta = 2.0 * math.pi * np.arange(N) / N
        nodes = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return _finalize(1, nodes, np.full(N, vol / N), vol, True,
                         uniform_circle=True, scheme=scheme)
    if scheme == "fibonacci":
        k = np.arange(N, dtype=float) + 0.5
        z = 1.0 - 2.0 * k / N
        phi = 2.0 * math.pi * k / _GOLDEN
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        nodes = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    else:  # equal_area: zonal bands of equal area, uniform azimuths per band
        nodes = _equal_area_nodes(N)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    return _finalize(2, nodes, np.full(N, vol / N), vol, True, scheme=scheme)


def _equal_area_nodes(N):
    n_rings = max(2, round(math.sqrt(2.0 * N / math.pi)))
    # split [1,-1] in z into n_rings bands of equal area, allocate nodes by area
    counts = np.diff(np.round(np.linspace(0, N, n_rings + 1))).astype(int)
    counts[counts == 0] = 1
    while counts.sum() > N:
        counts[np.argmax(counts)] -= 1
    while counts.sum() < N:
        counts[np.argmin(counts)] += 1
    pts = []
    for j, cnt in enumerate(counts):
        z_lo = 1.0 - 2.0 * (j + 1) / n_rings
        z_hi = 1.0 - 2.0 * j / n_rings
        z = 0.5 * (z_lo + z_hi)
        rho = math.sqrt(max(0.0, 1.0 - z * z))
        offset = 2.0 * math.pi * ((j / _GOLDEN) % 1.0)
        phi = 2.0 * math.pi * np.arange(cnt) / cnt + offset
        pts.append(np.stack([rho * np.cos(phi), rho * np.sin(phi),
                             np.full(cnt, z)], axis=1))
    return np.concatenate(pts, axis=0)


def validate_geometry(geom: Geometry, n_triples: int = 10_000,
                      seed: int = 0) -> list[str]:
    """Check all Geometry invariants; returns a list of violation messages."""
    out = []
    w = geom.weights
    bad = np.nonzero(~(w > 0))[0]
    if bad.size:
        out.append(f"nonpositive weights at indices {bad[:10].tolist()}")
    if geom.unit_sphere:
        vol = sphere_volume(geom.dim)
        if abs(w.sum() - vol) / vol > 1e-12:
            out.append(f"weight sum {w.sum()!r} deviates from sphere volume {vol!r}")
        nrm = np.linalg.norm(geom.nodes, axis=1)
        bad = np.nonzero(np.abs(nrm - 1.0) > 1e-14)[0]
        if bad.size:
            out.append(f"nodes off the unit sphere at indices {bad[:10].tolist()}")
    elif abs(w.sum() - geom.total_volume) > 1e-12 * abs(geom.total_volume):
        out.append("weight sum does not match total_volume")
    for name, d in (("chordal", geom.chordal), ("geodesic", geom.geodesic)):
        if d.shape != (geom.size, geom.size):
            out.append(f"{name} matrix has wrong shape {d.shape}")
            continue
        asym = np.abs(d - d.T)
        ij = np.unravel_index(np.argmax(asym), asym.shape)
        if asym[ij] > 0.0:
            out.append(f"{name} matrix asymmetric, worst pair {ij} defect {asym[ij]:.3e}")
        if np.abs(np.diag(d)).max() > 0.0:
            out.append(f"{name} matrix has nonzero diagonal")
        off = d[~np.eye(geom.size, dtype=bool)]
        if not (off > 0).all():
            out.append(f"{name} matrix has nonpositive off-diagonal entries")
    if geom.unit_sphere:
        lo = geom.chordal - geom.geodesic
        hi = geom.geodesic - 0.5 * math.pi * geom.chordal
        if lo.max() > 1e-12:
            out.append(f"chordal > geodesic by {lo.max():.3e}")
        if hi.max() > 1e-12:
            out.append(f"geodesic > (pi/2)*chordal by {hi.max():.3e}")
    # sampled triangle inequality; exhaustive O(N^3) is wasteful here
    rng = np.random.default_rng(seed)
    N = geom.size
    i, j, k = rng.integers(0, N, size=(3, n_triples))
    d = geom.geodesic
    defect = d[i, j] - d[i, k] - d[k, j]
    if defect.max() > 1e-12:
        t = int(np.argmax(defect))
        out.append(f"triangle inequality fails for ({i[t]},{j[t]},{k[t]}) "
                   f"by {defect.max():.3e}")
    return out


# ------------------------------------------------------------------ file I/O

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_matrix(fh, name, mat):
    fh.write(f"{name} {mat.shape[0]}\n")
    for row in mat:
        fh.write(" ".join(_fmt(v) for v in row) + "\n")


def save_geometry(geom: Geometry, path, include_distances: bool = True) -> None:
    with open(path, "w") as fh:
        fh.write("# riesz-flow geometry v1\n")
        fh.write(f"dim {geom.dim}\n")
        fh.write(f"volume {_fmt(geom.total_volume)}\n")
        fh.write(f"unit_sphere {int(geom.unit_sphere)}\n")
        fh.write(f"uniform_circle {int(geom.uniform_circle)}\n")
        if geom.scheme:
            fh.write(f"scheme {geom.scheme}\n")
        fh.write(f"nodes {geom.size} {geom.nodes.shape[1]}\n")
        for row in geom.nodes:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")
        fh.write(f"weights {geom.size}\n")
        for v in geom.weights:
            fh.write(_fmt(v) + "\n")
        if include_distances:
            _write_matrix(fh, "chordal", geom.chordal)
            _write_matrix(fh, "geodesic", geom.geodesic)


def _read_tokens(path):
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield line.split()


def load_geometry(path) -> Geometry:
    """Load a geometry file, recomputing missing distance tables.

    Chordal distances are recomputed from coordinates when absent; geodesic
    falls back to great-circle distances when the nodes are unit vectors and
    to chordal otherwise. Invariant violations raise ValidationError with the
    offending indices.
    """
    header: dict[str, float] = {}
    scheme = ""
    nodes = weights = chordal = geodesic = None
    tok = _read_tokens(path)
    try:
        for t in tok:
            key = t[0]
            if key == "scheme":
                scheme = t[1]
            elif key in ("dim", "volume", "unit_sphere", "uniform_circle"):
                header[key] = float(t[1])
            elif key == "nodes":
                cnt, amb = int(t[1]), int(t[2])
                nodes = np.array([[float(v) for v in next(tok)] for _ in range(cnt)])
                if nodes.shape != (cnt, amb):
                    raise ValidationError(f"{path}: nodes block has wrong shape")
            elif key == "weights":
                cnt = int(t[1])
                weights = np.array([float(next(tok)[0]) for _ in range(cnt)])
            elif key in ("chordal", "geodesic", "distances"):
                cnt = int(t[1])
                mat = np.array([[float(v) for v in next(tok)] for _ in range(cnt)])
                if key == "geodesic":
                    geodesic = mat
                else:
                    chordal = mat
            else:
                raise ValidationError(f"{path}: unrecognized field {key!r}")
    except (StopIteration, ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed geometry file ({exc})") from exc
    if nodes is None or weights is None or "dim" not in header:
        raise ValidationError(f"{path}: geometry file must provide dim, nodes and weights")
    if len(weights) != len(nodes):
        raise ValidationError(f"{path}: {len(weights)} weights for {len(nodes)} nodes")
    dim = int(header["dim"])
    unit = bool(np.abs(np.linalg.norm(nodes, axis=1) - 1.0).max() <= 1e-12)
    if chordal is None:
        chordal = _accel.pairwise_dist(np.ascontiguousarray(nodes))
    if geodesic is None:
        if unit:
            geodesic = np.arccos(_accel.pairwise_gram(np.ascontiguousarray(nodes)))
            np.fill_diagonal(geodesic, 0.0)
        else:
            geodesic = chordal.copy()
    volume = float(header.get("volume", weights.sum()))
    geom = Geometry(dim, np.ascontiguousarray(nodes), np.ascontiguousarray(weights),
                    np.ascontiguousarray(chordal), np.ascontiguousarray(geodesic),
                    volume, bool(header.get("unit_sphere", unit)),
                    bool(header.get("uniform_circle", 0)), scheme)
    problems = validate_geometry(geom)
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems))
    return geom
