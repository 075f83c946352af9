"""Time integration of the three Riesz-potential flows and their diagnostics.

The integrator state is w = u^m (the evolution is an ODE system in w with a
smooth right-hand side wherever u > 0); u = w^{1/m} is recovered per stage.
Time stepping is classical four-stage Runge-Kutta with step-doubling error
control, a positivity guard, and a near-blow-up step limiter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import ConfigError, NumericalError
from .kernel import KernelOperator, apply

__all__ = [
    "REGIMES", "FlowState", "DiagnosticsRecord", "Trajectory", "BlowupReport",
    "ComparisonReport", "GrowthReport", "LimitIdentityReport", "RescaledView",
    "beta_coefficient", "make_state", "rhs", "evolve", "separable_solution",
    "detect_blowup", "rescale_to_tau", "diagnostics", "comparison_run",
    "growth_check", "rescaled_companion", "limit_identity_check",
]

REGIMES = ("raw", "rescaled", "critical")

DT_MIN = 1e-12


def beta_coefficient(m: float) -> float:
    """Zeroth-order coefficient m/|1-m| of the rescaled flow."""
    if m == 1.0:
        raise ConfigError("beta = m/|1-m| is undefined at m=1")
    return m / abs(1.0 - m)


@dataclass
class FlowState:
    u: np.ndarray
    w: np.ndarray             # cached u^m
    t: float
    m: float
    regime: str


def make_state(u0: np.ndarray, m: float, regime: str, t: float = 0.0) -> FlowState:
    if regime not in REGIMES:
        raise ConfigError(f"regime {regime!r} not in {REGIMES}")
    if m <= 0:
        raise ConfigError(f"exponent m={m} must be positive")
    if regime == "rescaled" and m == 1.0:
        raise ConfigError("the rescaled regime requires m != 1")
    u0 = np.asarray(u0, dtype=float).copy()
    if not ((u0 > 0).all() and np.isfinite(u0).all()):
        raise ConfigError("initial data must be strictly positive and finite")
    return FlowState(u0, u0 ** m, float(t), float(m), regime)


def _u_of(w: np.ndarray, m: float) -> np.ndarray:
    return w if m == 1.0 else w ** (1.0 / m)


def rhs(kern: KernelOperator, state: FlowState) -> np.ndarray:
    """dw/dt for the state's regime (raw growth, rescaled, normalized critical)."""
    u = _u_of(state.w, state.m)
    Ku = apply(kern, u)
    if state.regime == "raw":
        return Ku
    if state.regime == "rescaled":
        return Ku - beta_coefficient(state.m) * state.w
    wq = kern.geom.weights
    a = (_accel.weighted_inner(wq, u, Ku)
         / _accel.weighted_pow_sum(wq, u, state.m + 1.0))
    return Ku - a * state.w


# ------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    V: float                  # int u^{m+1}
    a: float                  # int u K(u) / V
    J: float                  # Riesz quotient at the flow exponent
    M: dict[float, float]     # conformal deviation moments, keyed by q
    G: float                  # gradient-structure functional (beta = m/|1-m|)
    Z: float                  # V^{(m-1)/(m+1)}
    harnack: float            # max u / min u
    ps_residual: float        # M_{2n/(n-2s)}^{(n-2s)/(2n)}
    sup_u: float
    dt: float                 # step that produced this state (0 at t=0)


def _record(kern: KernelOperator, u: np.ndarray, Ku: np.ndarray, m: float,
            t: float, dt: float, q_set) -> DiagnosticsRecord:
    wq = kern.geom.weights
    n, sigma = kern.n, kern.sigma
    mc = kern.m_critical
    V = _accel.weighted_pow_sum(wq, u, m + 1.0)
    energy = _accel.weighted_inner(wq, u, Ku)
    a = energy / V
    J = energy / V ** (2.0 / (m + 1.0))
    with np.errstate(over="ignore"):
        Q = u ** (-mc) * Ku
        M = {float(q): _accel.abs_dev_pow_sum(wq, Q, a, float(q), u, mc + 1.0)
             for q in q_set}
        q_ps = 2.0 * n / (n - 2.0 * sigma)
        ps = _accel.abs_dev_pow_sum(wq, Q, a, q_ps, u, mc + 1.0) ** ((n - 2 * sigma) / (2 * n))
    if m == 1.0:
        G = math.nan
    else:
        beta = beta_coefficient(m)
        G = 0.5 * energy - beta / (m + 1.0) * V
    Z = V ** ((m - 1.0) / (m + 1.0))
    return DiagnosticsRecord(t, V, a, J, M, G, Z,
                             float(u.max() / u.min()), ps, float(u.max()), dt)


def diagnostics(kern: KernelOperator, state: FlowState,
                q_set=(1.0, 2.0)) -> DiagnosticsRecord:
    """Full diagnostic snapshot of a state (one kernel application)."""
    return _record(kern, state.u, apply(kern, state.u), state.m,
                   state.t, math.nan, q_set)


@dataclass
class Trajectory:
    regime: str
    m: float
    sigma: float
    q_set: tuple
    records: list[DiagnosticsRecord]
    snapshots: list[tuple[float, np.ndarray]]
    termination: str          # "t_end" | "blow-up" | "stagnation"
    blown_up: bool
    renormalized: bool
    final: FlowState
    max_renorm_drift: float = 0.0  # worst |V-1| removed by the projection

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def moment(self, q: float) -> np.ndarray:
        return np.array([r.M[float(q)] for r in self.records])


# ------------------------------------------------------------- integrator

def _rk4(rhs_w, w, dt):
    """One classical step; returns None as soon as a stage leaves positivity."""
    k1 = rhs_w(w)
    y = w + 0.5 * dt * k1
    if not (y > 0).all():
        return None
    k2 = rhs_w(y)
    y = w + 0.5 * dt * k2
    if not (y > 0).all():
        return None
    k3 = rhs_w(y)
    y = w + dt * k3
    if not (y > 0).all():
        return None
    k4 = rhs_w(y)
    out = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out if (out > 0).all() else None


def evolve(kern: KernelOperator, state: FlowState, t_end: float, *,
           dt: float = 1e-3, adaptive: bool = True, rtol: float = 1e-8,
           eta: float = 0.05, sup_cap: float = 1e10,
           renormalize: bool | None = None, q_set=(1.0, 2.0),
           record_stride: int = 1, snapshot_stride: int = 0,
           max_snapshots: int = 129, max_steps: int = 1_000_000) -> Trajectory:
    """Integrate the flow to t_end and record diagnostics along the way.

    ``adaptive`` turns on step-doubling control (accept when the doubled-step
    vs two-half-steps sup difference is within rtol * ||w||_inf) plus the
    near-blow-up limiter dt <= eta * min_i w_i/|dw_i/dt|. With
    ``adaptive=False`` plain fixed steps of exactly ``dt`` are taken.
    Step rejection halves dt; dt underflow (< 1e-12) or sup u exceeding
    ``sup_cap`` terminates with the blow-up flag. For the critical regime,
    ``renormalize`` (default on) projects u onto the unit-volume constraint
    after every accepted step.

    Snapshots: with ``snapshot_stride=0`` (default) a thinning buffer keeps up
    to ``max_snapshots`` evenly spaced fields; a positive stride stores every
    k-th accepted step unconditionally.
    """
    if state.regime == "critical" and abs(state.m - kern.m_critical) > 1e-12:
        raise ConfigError(
            f"critical regime requires m = (n-2s)/(n+2s) = {kern.m_critical!r}, "
            f"got m={state.m!r}")
    if renormalize is None:
        renormalize = state.regime == "critical"
    m, regime = state.m, state.regime
    beta = beta_coefficient(m) if regime == "rescaled" else 0.0
    wq = kern.geom.weights

    def rhs_w(w):
        u = _u_of(w, m)
        Ku = _accel.matvec_weighted(kern.matrix, u, wq)
        if regime == "raw":
            return Ku
        if regime == "rescaled":
            return Ku - beta * w
        a = (_accel.weighted_inner(wq, u, Ku)
             / _accel.weighted_pow_sum(wq, u, m + 1.0))
        return Ku - a * w

    w = state.w.copy()
    t = state.t
    if renormalize:
        u = _u_of(w, m)
        V = _accel.weighted_pow_sum(wq, u, m + 1.0)
        w = w / V ** (m / (m + 1.0))

    records: list[DiagnosticsRecord] = []
    snapshots: list[tuple[float, np.ndarray]] = []
    thinning = snapshot_stride <= 0
    stride = 1 if thinning else snapshot_stride
    termination = "stagnation"
    blown = False
    last_dt = 0.0
    accepted = 0
    drift = 0.0

    while True:
        u = _u_of(w, m)
        Ku = _accel.matvec_weighted(kern.matrix, u, wq)
        if accepted % record_stride == 0 or t >= t_end:
            records.append(_record(kern, u, Ku, m, t, last_dt, q_set))
        if accepted % stride == 0:
            snapshots.append((t, u.copy()))
            if thinning and len(snapshots) > max_snapshots:
                snapshots = snapshots[::2]
                stride *= 2
        if t >= t_end - 1e-14 * max(1.0, abs(t_end)):
            termination = "t_end"
            break
        if float(u.max()) > sup_cap:
            termination, blown = "blow-up", True
            break
        if accepted >= max_steps:
            termination = "stagnation"
            break

        if regime == "raw":
            k1 = Ku
        elif regime == "rescaled":
            k1 = Ku - beta * w
        else:
            a = (_accel.weighted_inner(wq, u, Ku)
                 / _accel.weighted_pow_sum(wq, u, m + 1.0))
            k1 = Ku - a * w

        if adaptive:
            scale = np.abs(k1)
            pos = scale > 0
            if pos.any():
                dt = min(dt, eta * float((w[pos] / scale[pos]).min()))
        dt_try = min(dt, t_end - t)
        while True:
            if dt_try < DT_MIN:
                termination, blown = "blow-up", True
                break
            if not adaptive:
                w_new = _rk4(rhs_w, w, dt_try)
                if w_new is None:
                    termination, blown = "blow-up", True
                    break
                break
            half = _rk4(rhs_w, w, 0.5 * dt_try)
            w_new = None if half is None else _rk4(rhs_w, half, 0.5 * dt_try)
            big = None if w_new is None else _rk4(rhs_w, w, dt_try)
            if w_new is None or big is None:
                dt_try *= 0.5
                continue
            err = float(np.max(np.abs(big - w_new)) / np.max(np.abs(w_new)))
            if err <= rtol:
                grow = 2.0 if err == 0.0 else min(2.0, max(0.3, 0.9 * (rtol / err) ** 0.2))
                dt = dt_try * grow
                break
            dt_try *= 0.5
        if blown:
            break

        t += dt_try
        last_dt = dt_try
        accepted += 1
        w = w_new
        if renormalize:
            u = _u_of(w, m)
            V = _accel.weighted_pow_sum(wq, u, m + 1.0)
            drift = max(drift, abs(V - 1.0))
            w = w / V ** (m / (m + 1.0))

    u = _u_of(w, m)
    if not snapshots or snapshots[-1][0] != t:
        snapshots.append((t, u.copy()))
    if not records or records[-1].t != t:
        records.append(_record(kern, u, _accel.matvec_weighted(kern.matrix, u, wq),
                               m, t, last_dt, q_set))
    return Trajectory(regime, m, kern.sigma, tuple(q_set), records, snapshots,
                      termination, blown, renormalize,
                      FlowState(u, w, t, m, regime), drift)


# ------------------------------------------------------------- closed forms

def separable_solution(S: np.ndarray, m: float, c: float, t: float) -> np.ndarray:
    """Product solution h_c(t) S with h_c = (c + (m-1)t/m)^{1/(m-1)}."""
    if m == 1.0:
        raise ConfigError("separable solutions require m != 1")
    if m < 1.0 and c <= 0.0:
        raise ConfigError("m < 1 requires c > 0")
    base = c + (m - 1.0) / m * t
    if base <= 0.0:
        raise ConfigError(f"separable solution undefined at t={t} (past blow-up)")
    return base ** (1.0 / (m - 1.0)) * np.asarray(S, dtype=float)


# ------------------------------------------------------------- blow-up fits

@dataclass(frozen=True)
class BlowupReport:
    T_star_estimate: float
    exponent_fit: float        # log sup u vs log (T*-t) slope
    exponent_fit_lm1: float    # same for the L^{m+1} norm
    Z_slope_check: float       # max relative defect of dZ vs trapezoidal (m-1)J/m
    concavity_defect: float    # max positive second difference of Z, uneven-grid form
    n_samples: int


def detect_blowup(traj: Trajectory) -> BlowupReport:
    """Estimate T* and the rate exponents from a raw m<1 trajectory.

    T* comes from a linear fit of Z(t) over the last quartile of samples (Z is
    concave and asymptotically linear, so the extrapolation is stable); rate
    exponents are least-squares slopes over the final decade of T*-t.
    """
    if traj.regime != "raw" or traj.m >= 1.0:
        raise ConfigError("blow-up detection applies to raw trajectories with m < 1")
    if len(traj.records) < 10:
        raise NumericalError(f"too few samples ({len(traj.records)}) to estimate T*")
    ts = traj.times
    Z = traj.series("Z")
    J = traj.series("J")
    sup = traj.series("sup_u")
    V = traj.series("V")
    m = traj.m

    quart = ts >= ts[-1] - 0.25 * (ts[-1] - ts[0])
    slope, intercept = np.polyfit(ts[quart], Z[quart], 1)
    if slope >= 0.0:
        raise NumericalError("Z(t) is not decreasing; no blow-up to extrapolate")
    T_star = -intercept / slope
    if T_star <= ts[-1]:
        raise NumericalError("T* extrapolation landed inside the sampled range")

    tau = T_star - ts
    sel = (tau <= 0.1 * (T_star - ts[0])) & (tau > 0)
    if sel.sum() < 5:
        sel = quart
    p_sup = float(np.polyfit(np.log(tau[sel]), np.log(sup[sel]), 1)[0])
    p_lm1 = float(np.polyfit(np.log(tau[sel]), np.log(V[sel] ** (1.0 / (m + 1.0))), 1)[0])

    dtv = np.diff(ts)
    good = dtv > 0
    dz = np.diff(Z)[good]
    trap = (m - 1.0) / m * 0.5 * (J[1:] + J[:-1])[good] * dtv[good]
    slope_check = float(np.max(np.abs(dz - trap) / np.abs(trap)))

    slopes = dz / dtv[good]
    if len(slopes) > 1:
        hbar = 0.5 * (dtv[good][1:] + dtv[good][:-1])
        concavity = float(max(0.0, np.max(np.diff(slopes) * hbar)))
    else:
        concavity = 0.0
    return BlowupReport(float(T_star), p_sup, p_lm1, slope_check, concavity,
                        int(len(ts)))


@dataclass(frozen=True)
class RescaledView:
    tau: np.ndarray
    fields: list[np.ndarray]
    m: float
    T_star: float


def rescale_to_tau(traj: Trajectory, T_star: float) -> RescaledView:
    """Similarity change of variables applied to trajectory snapshots.

    m < 1: u~(tau) = (T*-t)^{1/(1-m)} u(t), tau = -ln((T*-t)/T*);
    m > 1: u~(tau) = t^{-1/(m-1)} u(t), tau = ln(1+t) (snapshots at t=0 are
    skipped since the factor is singular there).
    """
    m = traj.m
    if m == 1.0:
        raise ConfigError("rescaling requires m != 1")
    taus, fields = [], []
    for t, u in traj.snapshots:
        if m < 1.0:
            rem = T_star - t
            if rem <= 0:
                continue
            taus.append(-math.log(rem / T_star))
            fields.append(rem ** (1.0 / (1.0 - m)) * u)
        else:
            if t <= 0:
                continue
            taus.append(math.log1p(t))
            fields.append(t ** (-1.0 / (m - 1.0)) * u)
    return RescaledView(np.array(taus), fields, m, float(T_star))


def tau_to_t(tau: np.ndarray, m: float, T_star: float) -> np.ndarray:
    """Inverse of the rescaling time map (round-trip partner of rescale_to_tau)."""
    tau = np.asarray(tau, dtype=float)
    if m < 1.0:
        return T_star * (1.0 - np.exp(-tau))
    return np.expm1(tau)


# ------------------------------------------------------------- comparisons

@dataclass(frozen=True)
class ComparisonReport:
    ordered: bool
    first_violation_t: float   # NaN when ordered
    first_violation_index: int  # -1 when ordered
    times_checked: int
    t_reached: float = math.nan  # < t_end when blow-up interrupted the pair


def comparison_run(kern: KernelOperator, m: float, u0_low: np.ndarray,
                   u0_high: np.ndarray, t_end: float, *, dt: float = 1e-3,
                   rtol: float = 1e-8, eta: float = 0.05,
                   sup_cap: float = 1e10) -> ComparisonReport:
    """Co-evolve an ordered pair under the raw flow with shared steps and
    verify u_low < u_high at every node and accepted time."""
    lo = np.asarray(u0_low, dtype=float)
    hi = np.asarray(u0_high, dtype=float)
    if not ((lo > 0).all() and (hi > 0).all()):
        raise ConfigError("comparison inputs must be strictly positive")
    if not (lo <= hi).all():
        raise ConfigError("u0_low must be <= u0_high everywhere")
    if not (lo < hi).any():
        raise ConfigError("the ordering must be strict somewhere")
    wq = kern.geom.weights

    def rhs2(w2):
        u2 = w2 ** (1.0 / m)
        return np.stack([_accel.matvec_weighted(kern.matrix, u2[0], wq),
                         _accel.matvec_weighted(kern.matrix, u2[1], wq)])

    w2 = np.stack([lo ** m, hi ** m])
    t, checked = 0.0, 0
    while t < t_end - 1e-14:
        k1 = rhs2(w2)
        scale = np.abs(k1)
        pos = scale > 0
        if pos.any():
            dt = min(dt, eta * float((w2[pos] / scale[pos]).min()))
        dt_try = min(dt, t_end - t)
        while True:
            if dt_try < DT_MIN or w2[1].max() ** (1.0 / m) > sup_cap:
                return ComparisonReport(True, math.nan, -1, checked, t)
            half = _rk4(rhs2, w2, 0.5 * dt_try)
            new = None if half is None else _rk4(rhs2, half, 0.5 * dt_try)
            big = None if new is None else _rk4(rhs2, w2, dt_try)
            if new is None or big is None:
                dt_try *= 0.5
                continue
            err = float(np.max(np.abs(big - new)) / np.max(np.abs(new)))
            if err <= rtol:
                dt = dt_try * (2.0 if err == 0.0 else
                               min(2.0, max(0.3, 0.9 * (rtol / err) ** 0.2)))
                break
            dt_try *= 0.5
        w2 = new
        t += dt_try
        checked += 1
        diff = w2[1] - w2[0]
        if not (diff > 0).all():
            return ComparisonReport(False, t, int(np.argmin(diff)), checked, t)
    return ComparisonReport(True, math.nan, -1, checked, t)


@dataclass(frozen=True)
class GrowthReport:
    times: np.ndarray
    products: np.ndarray       # t * ||u/U0 - 1||_inf
    sup_product: float


def growth_check(traj: Trajectory, S: np.ndarray, t_start: float = 1.0) -> GrowthReport:
    """Running product t * ||u(t)/U0(t) - 1||_inf against the separable giant."""
    m = traj.m
    if m <= 1.0:
        raise ConfigError("the growth law applies to m > 1")
    times, prods = [], []
    for t, u in traj.snapshots:
        if t < t_start:
            continue
        U0 = ((m - 1.0) * t / m) ** (1.0 / (m - 1.0)) * S
        times.append(t)
        prods.append(t * float(np.max(np.abs(u / U0 - 1.0))))
    if not times:
        raise NumericalError(f"no snapshots at t >= {t_start}")
    prods = np.array(prods)
    return GrowthReport(np.array(times), prods, float(prods.max()))


# ----------------------------------------------- rescaled-frame identity

@dataclass(frozen=True)
class LimitIdentityReport:
    tau: np.ndarray
    V: np.ndarray
    G: np.ndarray
    residual: np.ndarray       # |V + 2(m+1)G/m| / V
    residual_at: float
    tau_at: float
    g_monotone_defect: float   # max positive decrease of G per step
    source: str                # "rescaled" | "critical-companion"


def companion_from_series(ts: np.ndarray, a_series: np.ndarray,
                          V_series: np.ndarray, m: float):
    """Bounded rescaled-frame companion from sampled normalizer/volume series.

    The critical flow and the rescaled flow differ by the exact change of
    variables u~(tau) = psi(t) u(t), tau' = psi^{m-1}; z = psi^{m-1} solves
    z' = ((m-1)/m)(a(t) z - beta z^2). Integrating z backward from the
    quasi-static terminal value a(T)/beta selects the solution that stays
    bounded (forward integration is exponentially unstable in tau, which is
    why a direct rescaled run cannot reach large tau from generic data).
    Returns (tau, psi, V, G) on the sample grid.
    """
    beta = beta_coefficient(m)
    ts = np.asarray(ts, dtype=float)
    av = np.asarray(a_series, dtype=float)
    Vv = np.asarray(V_series, dtype=float)
    z = np.empty_like(ts)
    z[-1] = av[-1] / beta

    def f(zz, aa):
        return (m - 1.0) / m * (aa * zz - beta * zz * zz)

    for i in range(len(ts) - 1, 0, -1):
        h = ts[i] - ts[i - 1]
        amid = 0.5 * (av[i] + av[i - 1])
        k1 = f(z[i], av[i])
        k2 = f(z[i] - 0.5 * h * k1, amid)
        k3 = f(z[i] - 0.5 * h * k2, amid)
        k4 = f(z[i] - h * k3, av[i - 1])
        z[i - 1] = z[i] - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    tau = np.concatenate([[0.0], np.cumsum(0.5 * (z[1:] + z[:-1]) * np.diff(ts))])
    psi = z ** (1.0 / (m - 1.0))
    V_res = psi ** (m + 1.0) * Vv
    G_res = 0.5 * psi ** 2 * av * Vv - beta / (m + 1.0) * psi ** (m + 1.0) * Vv
    return tau, psi, V_res, G_res


def rescaled_companion(traj: Trajectory):
    """Companion reconstruction on a critical trajectory's record grid."""
    if traj.regime != "critical":
        raise ConfigError("companion reconstruction expects a critical trajectory")
    return companion_from_series(traj.times, traj.series("a"), traj.series("V"),
                                 traj.m)


def limit_identity_check(traj: Trajectory, tau_eval: float | None = None) -> LimitIdentityReport:
    """Residual of the forced limit V(tau) -> -2(m+1)G_inf/m in the rescaled frame.

    Accepts a rescaled-regime trajectory directly, or a critical-regime
    trajectory through the bounded companion reconstruction.
    """
    if traj.regime == "rescaled":
        tau = traj.times
        V = traj.series("V")
        G = traj.series("G")
        source = "rescaled"
        m = traj.m
    elif traj.regime == "critical":
        tau, _, V, G = rescaled_companion(traj)
        source = "critical-companion"
        m = traj.m
    else:
        raise ConfigError("limit identity applies to rescaled or critical trajectories")
    resid = np.abs(V + 2.0 * (m + 1.0) / m * G) / V
    if tau_eval is None:
        idx = len(tau) - 1
    else:
        idx = int(np.argmin(np.abs(tau - tau_eval)))
    g_defect = float(max(0.0, np.max(-np.diff(G)))) if len(G) > 1 else 0.0
    return LimitIdentityReport(tau, V, G, resid, float(resid[idx]),
                               float(tau[idx]), g_defect, source)
