"""Command-line orchestration: config ingestion, runs, artifacts, reports.

A run is described by a flat key=value config file; CLI flags override file
keys. Every run directory is self-describing: the manifest alone suffices to
re-execute it, and identical config + seed + worker count reproduce
diagnostics.csv byte-for-byte.

Exit codes: 0 ok (a blow-up flag is not a failure), 2 config error,
3 numerical failure. Environment: RIESZ_FLOW_WORKERS (thread count),
RIESZ_FLOW_OUT (default output root), RIESZ_FLOW_NUMBA (backend selection).
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
from dataclasses import asdict
from importlib import resources

import numpy as np

from . import __version__, _accel
from .errors import ConfigError, NumericalError, RieszFlowError, ValidationError
from .manifold import (Geometry, SCHEMES, build_sphere, load_geometry,
                       save_geometry, validate_geometry)
from .kernel import (apply, build_intertwining_kernel, build_power_kernel,
                     critical_exponent, load_kernel, save_kernel,
                     validate_kernel)
from .steady import solve_extremal, steady_from_extremal
from .flow import (companion_from_series, detect_blowup, evolve, make_state,
                   separable_solution)
from .sphere import BubbleParams, bubble, check_kelvin_identities, fit_bubble
from .spectral import linearized_spectrum
from .io import (diagnostics_csv, load_field, read_diagnostics_csv, save_field,
                 write_json_atomic)

MANIFEST_NAME = "manifest"

# flat, documented config keys (value syntax in parentheses)
CONFIG_KEYS = {
    "geometry": "sphere:<n>:<N>[:<scheme>] or file:<path>",
    "sigma": "singularity strength, 0 < sigma < n/2",
    "kernel": "intertwining | power:<amplitude> | file:<path>",
    "regime": "raw | rescaled | critical",
    "m": "positive exponent, or the word 'critical'",
    "t_end": "final time",
    "dt": "initial (or fixed) step size",
    "adaptive": "on | off (step-doubling error control)",
    "rtol": "step-doubling acceptance tolerance",
    "eta": "near-blow-up step limiter",
    "sup_cap": "terminate with the blow-up flag past this sup-norm",
    "u0": "const:<v> | file:<path> | random:<seed>[:<amp>] | "
          "bubble:<lam>[:<c>] | separable:<c> | cosine:<amp>",
    "renormalize": "on | off | default (critical regime defaults on)",
    "q_set": "comma-separated deviation-moment orders",
    "snapshot_stride": "0 = auto-thinned (~64-128 evenly spaced), else every k-th step",
    "record_stride": "diagnostics every k-th accepted step",
    "steady_tol": "tolerance for internal steady solves (separable u0)",
    "out": "output directory (default under RIESZ_FLOW_OUT)",
}

DEFAULTS = {
    "geometry": "sphere:1:256:uniform_angle",
    "sigma": "0.25",
    "kernel": "intertwining",
    "regime": "critical",
    "m": "critical",
    "t_end": "10",
    "dt": "1e-3",
    "adaptive": "on",
    "rtol": "1e-8",
    "eta": "0.05",
    "sup_cap": "1e10",
    "u0": "const:1",
    "renormalize": "default",
    "q_set": "1,2",
    "snapshot_stride": "0",
    "record_stride": "1",
    "steady_tol": "1e-10",
    "out": "",
}

_BOOL = {"on": True, "true": True, "1": True, "yes": True,
         "off": False, "false": False, "0": False, "no": False}


def _parse_bool(key, val):
    v = val.strip().lower()
    if v not in _BOOL:
        raise ConfigError(f"{key} must be on/off, got {val!r}")
    return _BOOL[v]


# ------------------------------------------------------------------ config

def parse_config_file(path) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            cfg[key] = val
    return cfg


def load_preset(name: str) -> dict:
    base = resources.files("riesz_flow") / "presets"
    candidate = base / f"{name}.cfg"
    if not candidate.is_file():
        names = sorted(p.name[:-4] for p in base.iterdir() if p.name.endswith(".cfg"))
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(names)}")
    cfg = {}
    for lineno, raw in enumerate(candidate.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key] = val
    return cfg


def _geometry_dim(spec: str) -> int | None:
    kind, _, rest = spec.partition(":")
    if kind == "sphere":
        try:
            return int(rest.split(":")[0])
        except (ValueError, IndexError):
            return None
    if kind == "file" and os.path.exists(rest):
        with open(rest) as fh:
            for line in fh:
                t = line.split("#", 1)[0].split()
                if t and t[0] == "dim":
                    return int(t[1])
    return None


def validate_config(cfg: dict):
    """Returns (violations, warnings); unknown keys are violations."""
    violations, warnings = [], []
    for key in cfg:
        if key not in CONFIG_KEYS:
            violations.append(f"unknown key {key!r}")
    merged = {**DEFAULTS, **cfg}

    gspec = merged["geometry"]
    kind, _, rest = gspec.partition(":")
    if kind == "sphere":
        parts = rest.split(":")
        try:
            n, N = int(parts[0]), int(parts[1])
            scheme = parts[2] if len(parts) > 2 else None
            if n not in SCHEMES:
                violations.append(f"geometry: unsupported dimension {n}")
            elif scheme is not None and scheme not in SCHEMES[n]:
                violations.append(f"geometry: scheme {scheme!r} invalid for S^{n}")
            if N < 8:
                violations.append(f"geometry: node count {N} below minimum 8")
        except (ValueError, IndexError):
            violations.append(f"geometry: malformed sphere spec {gspec!r}")
    elif kind == "file":
        if not os.path.exists(rest):
            violations.append(f"geometry: file {rest!r} does not exist")
    else:
        violations.append(f"geometry: unknown kind {kind!r}")

    try:
        sigma = float(merged["sigma"])
    except ValueError:
        violations.append(f"sigma: not a number: {merged['sigma']!r}")
        sigma = None
    n_dim = _geometry_dim(gspec)
    if sigma is not None and n_dim is not None and not (0.0 < sigma < n_dim / 2.0):
        violations.append(f"sigma: {sigma} outside (0, {n_dim / 2.0})")

    kspec = merged["kernel"]
    kkind = kspec.partition(":")[0]
    if kkind not in ("intertwining", "power", "file"):
        violations.append(f"kernel: unknown kind {kkind!r}")
    elif kkind == "file" and not os.path.exists(kspec.partition(":")[2]):
        violations.append(f"kernel: file does not exist")

    regime = merged["regime"]
    if regime not in ("raw", "rescaled", "critical"):
        violations.append(f"regime: {regime!r} not one of raw/rescaled/critical")

    mtxt = merged["m"]
    if mtxt != "critical":
        try:
            m = float(mtxt)
            if m <= 0:
                violations.append(f"m: {m} must be positive")
            elif (sigma is not None and n_dim is not None and regime == "raw"
                  and m < critical_exponent(n_dim, sigma) and m < 1.0):
                warnings.append(
                    f"m={m} below the critical exponent: raw-flow run is exploratory "
                    "(blow-up behavior outside the supported rate laws)")
        except ValueError:
            violations.append(f"m: not a number: {mtxt!r}")

    for key in ("t_end", "dt", "rtol", "eta", "sup_cap", "steady_tol"):
        try:
            if float(merged[key]) <= 0:
                violations.append(f"{key}: must be positive")
        except ValueError:
            violations.append(f"{key}: not a number: {merged[key]!r}")
    for key in ("adaptive",):
        try:
            _parse_bool(key, merged[key])
        except ConfigError as exc:
            violations.append(str(exc))
    if merged["renormalize"].lower() not in {"default", *_BOOL}:
        violations.append("renormalize: must be on/off/default")
    try:
        qs = [float(q) for q in merged["q_set"].split(",") if q.strip()]
        if not qs or any(q < 1 for q in qs):
            violations.append("q_set: needs comma-separated orders >= 1")
    except ValueError:
        violations.append(f"q_set: malformed {merged['q_set']!r}")
    for key in ("snapshot_stride", "record_stride"):
        try:
            if int(merged[key]) < 0:
                violations.append(f"{key}: must be >= 0")
        except ValueError:
            violations.append(f"{key}: not an integer")

    ukind = merged["u0"].partition(":")[0]
    if ukind not in ("const", "file", "random", "bubble", "separable", "cosine"):
        violations.append(f"u0: unknown kind {ukind!r}")
    elif ukind == "file" and not os.path.exists(merged["u0"].partition(":")[2]):
        violations.append("u0: field file does not exist")
    elif ukind == "separable" and mtxt != "critical":
        try:
            if float(mtxt) == 1.0:
                violations.append("u0: separable data requires m != 1")
        except ValueError:
            pass
    return violations, warnings


# --------------------------------------------------------------- resolution

def _build_geometry(spec: str) -> Geometry:
    kind, _, rest = spec.partition(":")
    if kind == "sphere":
        parts = rest.split(":")
        n, N = int(parts[0]), int(parts[1])
        scheme = parts[2] if len(parts) > 2 else None
        return build_sphere(n, N, scheme)
    if kind == "file":
        return load_geometry(rest)
    raise ConfigError(f"unknown geometry kind {kind!r}")


def _build_kernel(spec: str, geom: Geometry, sigma: float):
    kind, _, rest = spec.partition(":")
    if kind == "intertwining":
        return build_intertwining_kernel(geom, sigma)
    if kind == "power":
        amp = float(rest) if rest else 1.0
        return build_power_kernel(geom, sigma, lambda X, Y: np.full(
            np.broadcast_shapes(X.shape[:-1], Y.shape[:-1]), amp))
    if kind == "file":
        return load_kernel(rest, geom)
    raise ConfigError(f"unknown kernel kind {kind!r}")


def _resolve_m(mtxt: str, kern) -> float:
    if mtxt.strip().lower() == "critical":
        return kern.m_critical
    return float(mtxt)


def _circle_angles(geom: Geometry):
    if geom.dim != 1:
        raise ConfigError("this initial-data kind needs an S^1 geometry")
    return np.arctan2(geom.nodes[:, 1], geom.nodes[:, 0])


def _build_u0(spec: str, geom: Geometry, kern, m: float, steady_tol: float):
    kind, _, rest = spec.partition(":")
    N = geom.size
    if kind == "const":
        return np.full(N, float(rest) if rest else 1.0)
    if kind == "file":
        arr, _ = load_field(rest)
        if len(arr) != N:
            raise ConfigError(f"u0 file has {len(arr)} values for {N} nodes")
        return arr
    if kind == "random":
        parts = rest.split(":") if rest else ["0"]
        seed = int(parts[0] or 0)
        amp = float(parts[1]) if len(parts) > 1 else 0.5
        rng = np.random.default_rng(seed)
        rough = rng.uniform(-1.0, 1.0, N)
        smooth = apply(kern, rough)  # kernel smoothing keeps the field resolvable
        lo, hi = smooth.min(), smooth.max()
        return 1.0 + amp * (smooth - lo) / max(hi - lo, 1e-300)
    if kind == "bubble":
        parts = rest.split(":") if rest else ["2"]
        lam = float(parts[0] or 2.0)
        c = float(parts[1]) if len(parts) > 1 else 1.0
        return bubble(geom, BubbleParams(geom.nodes[0].copy(), lam, c), kern.sigma)
    if kind == "separable":
        c = float(rest) if rest else 1.0
        sol = steady_from_extremal(kern, solve_extremal(kern, m, tol=steady_tol))
        return separable_solution(sol.S, m, c, 0.0)
    if kind == "cosine":
        amp = float(rest) if rest else 0.3
        return 1.0 + amp * np.cos(_circle_angles(geom))
    raise ConfigError(f"unknown u0 kind {kind!r}")


# --------------------------------------------------------------------- run

def _out_root() -> str:
    return os.environ.get("RIESZ_FLOW_OUT", "runs")


def execute_run(cfg: dict, out_dir: str | None = None) -> dict:
    """Execute a resolved config; writes artifacts and returns the manifest."""
    violations, warnings = validate_config(cfg)
    if violations:
        raise ConfigError("invalid config: " + "; ".join(violations))
    for wtext in warnings:
        print("warning:", wtext, file=sys.stderr)
    merged = {**DEFAULTS, **cfg}
    out_dir = out_dir or merged["out"] or os.path.join(
        _out_root(), datetime.datetime.now().strftime("run-%Y%m%d-%H%M%S"))
    os.makedirs(out_dir, exist_ok=True)
    merged["out"] = out_dir

    start = datetime.datetime.now(datetime.timezone.utc)
    geom = _build_geometry(merged["geometry"])
    sigma = float(merged["sigma"])
    kern = _build_kernel(merged["kernel"], geom, sigma)
    m = _resolve_m(merged["m"], kern)
    u0 = _build_u0(merged["u0"], geom, kern, m, float(merged["steady_tol"]))
    state = make_state(u0, m, merged["regime"])
    renorm = merged["renormalize"].lower()
    traj = evolve(
        kern, state, float(merged["t_end"]),
        dt=float(merged["dt"]),
        adaptive=_parse_bool("adaptive", merged["adaptive"]),
        rtol=float(merged["rtol"]),
        eta=float(merged["eta"]),
        sup_cap=float(merged["sup_cap"]),
        renormalize=None if renorm == "default" else _BOOL[renorm],
        q_set=tuple(float(q) for q in merged["q_set"].split(",") if q.strip()),
        record_stride=max(1, int(merged["record_stride"])),
        snapshot_stride=int(merged["snapshot_stride"]),
    )

    with open(os.path.join(out_dir, "diagnostics.csv"), "w") as fh:
        fh.write(diagnostics_csv(traj))
    for k, (t, u) in enumerate(traj.snapshots):
        save_field(os.path.join(out_dir, f"snapshot_{k:04d}.field"), u, t)

    last = traj.records[-1]
    summary = {
        "t_final": last.t, "V": last.V, "a": last.a, "J": last.J,
        "M_2": last.M.get(2.0, math.nan), "harnack": last.harnack,
        "ps_residual": last.ps_residual, "sup_u": last.sup_u,
        "steps_recorded": len(traj.records),
        "max_renorm_drift": traj.max_renorm_drift,
    }
    if traj.blown_up and traj.regime == "raw" and traj.m < 1.0:
        try:
            rep = detect_blowup(traj)
            write_json_atomic(os.path.join(out_dir, "blowup.report"), asdict(rep))
            summary.update(T_star=rep.T_star_estimate,
                           exponent_sup=rep.exponent_fit,
                           exponent_lm1=rep.exponent_fit_lm1,
                           predicted_exponent=-1.0 / (1.0 - traj.m))
        except (NumericalError, ConfigError) as exc:
            summary["blowup_fit_error"] = str(exc)

    manifest = {
        "tool": "riesz-flow",
        "version": __version__,
        "config": merged,
        "resolved_m": m,
        "backend": _accel.backend(),
        "workers": _accel.worker_count(),
        "start_time": start.isoformat(),
        "end_time": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "termination": traj.termination,
        "blown_up": traj.blown_up,
        "renormalized": traj.renormalized,
        "summary": summary,
    }
    write_json_atomic(os.path.join(out_dir, MANIFEST_NAME), manifest)
    return manifest


# ------------------------------------------------------------------ report

def _monotonicity_line(name, series):
    if not np.isfinite(series).all():
        return f"  {name:12s} n/a (undefined at this exponent)"
    drops = -np.diff(series)
    worst = float(drops.max()) if len(drops) else 0.0
    verdict = "nondecreasing" if worst <= 1e-10 else f"max per-step decrease {worst:.3e}"
    return f"  {name:12s} {verdict}"


def run_report(run_dir: str) -> str:
    mpath = os.path.join(run_dir, MANIFEST_NAME)
    dpath = os.path.join(run_dir, "diagnostics.csv")
    if not (os.path.isdir(run_dir) and os.path.exists(mpath) and os.path.exists(dpath)):
        raise ConfigError(f"{run_dir!r} is not a run directory (need {MANIFEST_NAME} "
                          "and diagnostics.csv)")
    with open(mpath) as fh:
        manifest = json.load(fh)
    _, cols = read_diagnostics_csv(dpath)
    m = float(manifest["resolved_m"])
    regime = manifest["config"]["regime"]
    lines = [f"run: {run_dir}",
             f"regime: {regime}  m: {m:.12g}  termination: {manifest['termination']}"
             f"  blown_up: {manifest['blown_up']}",
             "monotonicity:"]
    for name in ("a", "J", "G"):
        lines.append(_monotonicity_line(name, cols[name]))
    if regime == "raw" and m > 1.0:
        t, V = cols["t"], cols["V"]
        sel = t >= 0.1 * t[-1]
        if sel.sum() >= 5 and t[0] >= 0 and (t[sel] > 0).all():
            fit = float(np.polyfit(np.log(t[sel]),
                                   np.log(V[sel] ** (1.0 / (m + 1.0))), 1)[0])
            lines.append("growth exponent (L^{m+1} norm vs t): "
                         f"fitted {fit:.4f}, predicted {1.0 / (m - 1.0):.4f}")
    bpath = os.path.join(run_dir, "blowup.report")
    if os.path.exists(bpath):
        with open(bpath) as fh:
            rep = json.load(fh)
        lines.append("blow-up: T* = {T_star_estimate:.8g}, sup exponent {exponent_fit:.4f}, "
                     "L^(m+1) exponent {exponent_fit_lm1:.4f}".format(**rep))
        lines.append(f"         predicted exponent {-1.0 / (1.0 - m):.4f}, "
                     "Z slope defect {Z_slope_check:.3e}, concavity defect "
                     "{concavity_defect:.3e}".format(**rep))
    if regime == "critical":
        tau, _, Vr, Gr = companion_from_series(cols["t"], cols["a"], cols["V"], m)
        # evaluate inside the window: at tau_end the backward terminal
        # condition satisfies the identity by construction
        i = int(np.argmin(np.abs(tau - 0.85 * tau[-1])))
        resid = abs(Vr[i] + 2.0 * (m + 1.0) / m * Gr[i]) / Vr[i]
        lines.append(f"rescaled-frame limit identity: tau = {tau[i]:.3f} "
                     f"(of {tau[-1]:.3f}), |V + 2(m+1)G/m|/V = {resid:.3e}")
    if regime == "rescaled":
        rate = _empirical_decay_rate(run_dir)
        if rate is not None:
            lines.append("empirical decay rate of ||u - u_final||_inf: "
                         f"{rate:.4f} per unit time (display next to the "
                         "spectral gap from `spectrum`)")
    return "\n".join(lines)


def _empirical_decay_rate(run_dir):
    snaps = sorted(p for p in os.listdir(run_dir) if p.startswith("snapshot_"))
    if len(snaps) < 6:
        return None
    fields, times = [], []
    for p in snaps:
        u, t = load_field(os.path.join(run_dir, p))
        fields.append(u)
        times.append(t)
    ref = fields[-1]
    ts, devs = [], []
    for t, u in zip(times[:-1], fields[:-1]):
        d = float(np.max(np.abs(u - ref)))
        if d > 1e-13 * float(np.max(np.abs(ref))):
            ts.append(t)
            devs.append(d)
    if len(ts) < 4:
        return None
    return -float(np.polyfit(ts, np.log(devs), 1)[0])


# --------------------------------------------------------------- subcommands

def _cmd_geom(args) -> int:
    if args.action == "build":
        geom = build_sphere(args.n, args.nodes, args.scheme)
        save_geometry(geom, args.out, include_distances=not args.no_distances)
        print(f"wrote {args.out}: S^{args.n}, N={geom.size}, "
              f"scheme={geom.scheme}, volume={geom.total_volume:.12g}")
        return 0
    if args.action == "validate":
        geom = load_geometry(args.path)
        problems = validate_geometry(geom)
        if problems:
            for p in problems:
                print("violation:", p, file=sys.stderr)
            return 2
        print(f"ok: dim={geom.dim}, N={geom.size}, volume={geom.total_volume:.12g}, "
              f"unit_sphere={geom.unit_sphere}")
        return 0
    geom = load_geometry(args.path)
    save_geometry(geom, args.out, include_distances=not args.no_distances)
    print(f"exported {args.path} -> {args.out}")
    return 0


def _cmd_kernel(args) -> int:
    geom = _build_geometry(f"file:{args.geom}")
    if args.action == "build":
        if args.power_amplitude is not None:
            amp = args.power_amplitude
            kern = build_power_kernel(geom, args.sigma, lambda X, Y: np.full(
                np.broadcast_shapes(X.shape[:-1], Y.shape[:-1]), amp))
        else:
            kern = build_intertwining_kernel(geom, args.sigma)
        save_kernel(kern, args.out)
        print(f"wrote {args.out}: sigma={kern.sigma}, lambda={kern.lam}, "
              f"intertwining={kern.is_intertwining}")
        return 0
    kern = load_kernel(args.kernel, geom)
    if args.action == "validate":
        rep = validate_kernel(kern)
        print(f"symmetry defect {rep.symmetry_defect:.3e} "
              f"({'pass' if rep.k1_pass else 'FAIL'})")
        print(f"two-sided bound: fitted lambda {rep.lam_fit:.6g}, amplitude in "
              f"[{rep.amp_lo:.6g}, {rep.amp_hi:.6g}] "
              f"({'pass' if rep.k2_pass else 'FAIL'})")
        print(f"smoothness ratio {rep.k3_ratio:.6g} "
              f"({'pass' if rep.k3_pass else 'FAIL'})")
        print(f"pole constant {rep.pole_constant:.9g}, spread {rep.pole_spread:.3e} "
              f"({'pass' if rep.k4_pass else 'FAIL'})")
        return 0 if rep.passed else 2
    f, _ = load_field(args.field)
    save_field(args.out, apply(kern, f))
    print(f"wrote {args.out}")
    return 0


def _cmd_steady(args) -> int:
    geom = _build_geometry(f"file:{args.geom}")
    kern = (load_kernel(args.kernel, geom) if args.kernel
            else build_intertwining_kernel(geom, args.sigma))
    init = load_field(args.init)[0] if args.init else None
    sol = solve_extremal(kern, args.m, init=init, tol=args.tol,
                         max_iter=args.max_iter, damping=args.damping)
    if args.m != 1.0:
        sol = steady_from_extremal(kern, sol)
    save_field(args.out + ".field", sol.S)
    record = {"J_bar": sol.J_bar, "residual": sol.residual,
              "iterations": sol.iterations, "converged": sol.converged,
              "status": sol.status, "m": sol.m, "tol": args.tol}
    write_json_atomic(args.out + ".json", record)
    print(f"J_bar={sol.J_bar:.12g} residual={sol.residual:.3e} "
          f"iterations={sol.iterations} converged={sol.converged}")
    return 0 if sol.converged else 3


def _cmd_run(args) -> int:
    cfg = {}
    if args.preset:
        cfg.update(load_preset(args.preset))
    if args.config:
        if args.config.endswith(MANIFEST_NAME) or args.config.endswith(".json"):
            with open(args.config) as fh:
                cfg.update(json.load(fh)["config"])
        else:
            cfg.update(parse_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = (s.strip() for s in item.split("=", 1))
        cfg[key] = val
    if args.t_end is not None:
        cfg["t_end"] = repr(args.t_end)
    if args.out:
        cfg["out"] = args.out
    if not cfg:
        raise ConfigError("run needs --config, --preset, or --set key=value")
    manifest = execute_run(cfg)
    s = manifest["summary"]
    print(f"run complete: {manifest['config']['out']}")
    print(f"termination={manifest['termination']} blown_up={manifest['blown_up']} "
          f"t={s['t_final']:.6g} V={s['V']:.9g} a={s['a']:.9g} "
          f"harnack={s['harnack']:.6g}")
    return 0


def _cmd_fit_bubble(args) -> int:
    if args.run:
        mpath = os.path.join(args.run, MANIFEST_NAME)
        with open(mpath) as fh:
            manifest = json.load(fh)
        geom = _build_geometry(manifest["config"]["geometry"])
        sigma = float(manifest["config"]["sigma"])
        snaps = sorted(p for p in os.listdir(args.run) if p.startswith("snapshot_"))
        if not snaps:
            raise ConfigError(f"{args.run}: no snapshots to fit")
        u, t = load_field(os.path.join(args.run, snaps[-1]))
    else:
        if not (args.infile and args.geom):
            raise ConfigError("fit-bubble needs --run, or --in plus --geom")
        geom = _build_geometry(f"file:{args.geom}")
        sigma = args.sigma
        u, t = load_field(args.infile)
    fit = fit_bubble(geom, u, sigma, lam_max=args.lam_max)
    record = {"time": t, "lam": fit.params.lam, "c": fit.params.c,
              "xi0": fit.params.xi0.tolist(), "residual": fit.residual,
              "converged": fit.converged, "n_starts": fit.n_starts}
    print(f"lam={fit.params.lam:.8g} c={fit.params.c:.8g} "
          f"residual={fit.residual:.3e} converged={fit.converged}")
    print(f"xi0={np.array2string(fit.params.xi0, precision=8)}")
    if args.run:
        manifest.setdefault("bubble_fits", []).append(record)
        write_json_atomic(mpath, manifest)
    if not fit.converged:
        return 3
    return 0


def _cmd_check_kelvin(args) -> int:
    nms = (args.n - 2.0 * args.sigma) / 2.0

    def v(x):
        x = np.asarray(x, dtype=float)
        return (2.0 / (1.0 + x * x)) ** nms

    rng = np.random.default_rng(args.seed)
    pts = args.x0 + rng.uniform(-4.0 * args.lam, 4.0 * args.lam, args.points)
    rep = check_kelvin_identities(v, args.x0, args.lam, args.n, args.sigma, pts,
                                  n_per_decade=args.npd)
    print(f"identity defects: {rep.defect_id1:.3e} (exterior->interior), "
          f"{rep.defect_id2:.3e} (interior->exterior)")
    print(f"points used {rep.points_used}, skipped {rep.points_skipped}; "
          f"grid {rep.n_per_decade}/decade, truncation {rep.truncation_radius:.1e} "
          f"(tail bound {rep.tail_bound:.1e}, reported not corrected)")
    return 0


def _cmd_spectrum(args) -> int:
    geom = _build_geometry(f"file:{args.geom}")
    kern = (load_kernel(args.kernel, geom) if args.kernel
            else build_intertwining_kernel(geom, args.sigma))
    S, _ = load_field(args.steady)
    spec = linearized_spectrum(kern, S, args.m, args.k)
    with open(args.out_prefix + "_eigenvalues.csv", "w") as fh:
        fh.write("index,eigenvalue,residual\n")
        for i, (lam, res) in enumerate(zip(spec.eigenvalues, spec.eig_residuals)):
            fh.write(f"{i},{lam:.17g},{res:.17g}\n")
    for i in range(args.k):
        save_field(f"{args.out_prefix}_psi_{i:02d}.field", spec.psi[i])
        save_field(f"{args.out_prefix}_phi_{i:02d}.field", spec.phi[i])
    gap = (1.0 - spec.eigenvalues[1]) if args.k > 1 else math.nan
    print("eigenvalues:", np.array2string(spec.eigenvalues, precision=10))
    print(f"gap 1 - lambda_2 = {gap:.10g}")
    return 0


def _cmd_validate(args) -> int:
    cfg = parse_config_file(args.config)
    violations, warnings = validate_config(cfg)
    for wtext in warnings:
        print("warning:", wtext)
    if violations:
        for v in violations:
            print("violation:", v, file=sys.stderr)
        return 2
    print("ok")
    return 0


def _cmd_report(args) -> int:
    print(run_report(args.run_dir))
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="riesz-flow",
        description="Numerical laboratory for Riesz-potential integral flows.",
        epilog="config keys: " + "; ".join(f"{k} ({v})" for k, v in CONFIG_KEYS.items()))
    p.add_argument("--version", action="version", version=f"riesz-flow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geom", help="build/validate/export geometries")
    gs = g.add_subparsers(dest="action", required=True)
    gb = gs.add_parser("build")
    gb.add_argument("--n", type=int, required=True, choices=(1, 2))
    gb.add_argument("--nodes", type=int, required=True)
    gb.add_argument("--scheme", default=None)
    gb.add_argument("--out", required=True)
    gb.add_argument("--no-distances", action="store_true")
    gv = gs.add_parser("validate")
    gv.add_argument("path")
    ge = gs.add_parser("export")
    ge.add_argument("path")
    ge.add_argument("--out", required=True)
    ge.add_argument("--no-distances", action="store_true")
    g.set_defaults(func=_cmd_geom)

    k = sub.add_parser("kernel", help="build/validate/apply kernel operators")
    ks = k.add_subparsers(dest="action", required=True)
    kb = ks.add_parser("build")
    kb.add_argument("--geom", required=True)
    kb.add_argument("--sigma", type=float, required=True)
    kb.add_argument("--power-amplitude", type=float, default=None,
                    help="constant amplitude instead of the intertwining kernel")
    kb.add_argument("--out", required=True)
    kv = ks.add_parser("validate")
    kv.add_argument("kernel")
    kv.add_argument("--geom", required=True)
    ka = ks.add_parser("apply")
    ka.add_argument("--kernel", required=True)
    ka.add_argument("--geom", required=True)
    ka.add_argument("--field", required=True)
    ka.add_argument("--out", required=True)
    k.set_defaults(func=_cmd_kernel)

    st = sub.add_parser("steady", help="solve the extremal/steady problem")
    st.add_argument("--geom", required=True)
    st.add_argument("--sigma", type=float, default=0.25)
    st.add_argument("--kernel", default=None)
    st.add_argument("--m", type=float, required=True)
    st.add_argument("--init", default=None)
    st.add_argument("--tol", type=float, default=1e-10)
    st.add_argument("--damping", type=float, default=None)
    st.add_argument("--max-iter", type=int, default=400)
    st.add_argument("--out", required=True, help="output prefix")
    st.set_defaults(func=_cmd_steady)

    r = sub.add_parser("run", help="execute a configured flow run")
    r.add_argument("--config", default=None,
                   help="config file (or a manifest to re-execute)")
    r.add_argument("--preset", default=None,
                   help="bundled preset name (e.g. thm-1.1-i, thm-1.3)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key")
    r.add_argument("--t-end", type=float, default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=_cmd_run)

    fb = sub.add_parser("fit-bubble", help="fit the extremal bubble family to a field")
    fb.add_argument("--run", default=None, help="run directory (uses the last snapshot)")
    fb.add_argument("--in", dest="infile", default=None)
    fb.add_argument("--geom", default=None)
    fb.add_argument("--sigma", type=float, default=0.25)
    fb.add_argument("--lam-max", type=float, default=10.0)
    fb.set_defaults(func=_cmd_fit_bubble)

    ck = sub.add_parser("check-kelvin", help="verify the inversion identities")
    ck.add_argument("--lambda", dest="lam", type=float, required=True)
    ck.add_argument("--x0", type=float, default=0.0)
    ck.add_argument("--n", type=int, default=1)
    ck.add_argument("--sigma", type=float, default=0.25)
    ck.add_argument("--points", type=int, default=20)
    ck.add_argument("--seed", type=int, default=7)
    ck.add_argument("--npd", type=int, default=400)
    ck.set_defaults(func=_cmd_check_kelvin)

    sp = sub.add_parser("spectrum", help="linearized spectrum at a steady state")
    sp.add_argument("--geom", required=True)
    sp.add_argument("--sigma", type=float, default=0.25)
    sp.add_argument("--kernel", default=None)
    sp.add_argument("--steady", required=True)
    sp.add_argument("--m", type=float, required=True)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--out-prefix", default="spectrum")
    sp.set_defaults(func=_cmd_spectrum)

    rp = sub.add_parser("report", help="summarize a run directory")
    rp.add_argument("run_dir")
    rp.set_defaults(func=_cmd_report)

    va = sub.add_parser("validate", help="validate a run config file")
    va.add_argument("config")
    va.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print("config error:", exc, file=sys.stderr)
        return 2
    except NumericalError as exc:
        print("numerical failure:", exc, file=sys.stderr)
        return 3
    except RieszFlowError as exc:
        print("error:", exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
