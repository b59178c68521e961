"""Hamiltonian bicharacteristic flows of the mode and wave symbols.

State layouts (rows of a batch):

* mode flows (``mode-rot``, ``mode-starrot``): ``[r, psi, theta, xi_r, xi_psi, xi_theta]``
* wave flow (``wave-rot``): ``[tau, r, psi, theta, xi_tau, xi_r, xi_psi, xi_theta]``

The momenta conjugate to the cyclic coordinates (xi_psi, xi_tau) are carried
in the state with an identically zero derivative, so they stay bit-exact.
By default the vector field is that of ``q = rho^2 p``; ``conformal=False``
gives the field of ``p`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .charts import ExtensionProfile
from .config import DEFAULT, Tolerances
from .errors import DomainError, SampleConstructionFailure
from .integrator import EVENT, integrate_batch
from .radial import mu, mu_derivatives
from .symbols import angular_B, radial_D, s_pairing, star_coefficients
from .trapping import F_eval, TrappedOrbit, linearization, manifold_xi_r, wave_carter_theta

__all__ = [
    "KINDS",
    "FlowState",
    "Trajectory",
    "ham_rhs",
    "rhs_batch",
    "symbol_batch",
    "symbol_scale",
    "carter_const",
    "integrate",
    "sample_mode_characteristic",
    "sample_wave_characteristic",
    "select_escape_constant",
    "mode_no_trapping_experiment",
    "horizon_crossing_check",
    "wave_trapping_experiment",
    "wave_state_on_orbit",
    "feasible_theta",
    "mode_convexity_check",
    "wave_convexity_check",
    "jacobian_check",
]

KINDS = ("mode-rot", "mode-starrot", "wave-rot")
_DIM = {"mode-rot": 6, "mode-starrot": 6, "wave-rot": 8}


# -- fields --------------------------------------------------------------------


def _theta_part(params, hz, th, x_psi, x_th):
    """Angular terms of the mode symbol and their theta-derivative."""
    c = params.c(th)
    B = angular_B(params, hz, th)
    dB = angular_B(params, hz, th, 1)
    return c, B, params.dc(th), dB


def _mode_rhs(profile: ExtensionProfile, Y, star: bool):
    p, hz = profile.params, profile.horizons
    r, th = Y[:, 0], Y[:, 2]
    xr, xp, xt = Y[:, 3], Y[:, 4], Y[:, 5]
    m0 = mu(p, r)
    m1 = mu_derivatives(p, r, 1)
    c, B, dc, dB = _theta_part(p, hz, th, xp, xt)
    out = np.zeros_like(Y)
    if star:
        L, A = star_coefficients(profile, r)
        dL, dA = star_coefficients(profile, r, 1)
        out[:, 0] = 2.0 * m0 * xr + L * xp
        out[:, 1] = L * xr + 2.0 * (B + A) * xp
        out[:, 3] = -(m1 * xr * xr + dL * xp * xr + dA * xp * xp)
    else:
        D = radial_D(p, hz, r)
        dD = radial_D(p, hz, r, 1)
        out[:, 0] = 2.0 * m0 * xr
        out[:, 1] = 2.0 * (B - D) * xp
        out[:, 3] = -(m1 * xr * xr - dD * xp * xp)
    out[:, 2] = 2.0 * c * xt
    out[:, 5] = -(dc * xt * xt + dB * xp * xp)
    return out


def _wave_parts(profile: ExtensionProfile, Y):
    p, hz = profile.params, profile.horizons
    a, b2 = p.spin, p.b**2
    k = a / (hz.r0**2 + a * a)
    r, th = Y[:, 1], Y[:, 3]
    x_tau, xr, xp, xth = Y[:, 4], Y[:, 5], Y[:, 6], Y[:, 7]
    x_t = x_tau - k * xp
    sn, cs = np.sin(th), np.cos(th)
    s = sn * sn
    ds = 2.0 * sn * cs
    c, dc = p.c(th), p.dc(th)
    u = a * s * x_t + xp
    ra = r * r + a * a
    P = ra * x_t + a * xp
    m0 = mu(p, r)
    return dict(p=p, a=a, b2=b2, k=k, r=r, th=th, xr=xr, xp=xp, xth=xth, x_t=x_t,
                s=s, ds=ds, c=c, dc=dc, u=u, ra=ra, P=P, m0=m0)


def _wave_rhs(profile: ExtensionProfile, Y):
    w = _wave_parts(profile, Y)
    p, a, b2, k = w["p"], w["a"], w["b2"], w["k"]
    r, s, c, u, P, m0, ra = w["r"], w["s"], w["c"], w["u"], w["P"], w["m0"], w["ra"]
    xr, xth, x_t = w["xr"], w["xth"], w["x_t"]
    m1 = mu_derivatives(p, r, 1)
    cs_ = c * s
    # d/dxi_tau and d/dxi_psi of u and P
    u_T, P_T = a * s, ra
    u_A, P_A = 1.0 - a * k * s, a - k * ra
    out = np.zeros_like(Y)
    out[:, 0] = 2.0 * b2 * u * u_T / cs_ - 2.0 * b2 * P * P_T / m0
    out[:, 1] = 2.0 * m0 * xr
    out[:, 2] = 2.0 * b2 * u * u_A / cs_ - 2.0 * b2 * P * P_A / m0
    out[:, 3] = 2.0 * c * xth
    dP = 2.0 * r * x_t
    dF = (2.0 * P * dP * m0 - P * P * m1) / (m0 * m0)
    out[:, 5] = -m1 * xr * xr + b2 * dF
    du = a * x_t * w["ds"]
    dden = w["dc"] * s + c * w["ds"]
    dang = 2.0 * u * du / cs_ - u * u * dden / (cs_ * cs_)
    out[:, 7] = -(w["dc"] * xth * xth + b2 * dang)
    return out


def symbol_batch(kind: str, profile: ExtensionProfile, Y):
    """q at each row of Y."""
    Y = np.atleast_2d(np.asarray(Y, float))
    p, hz = profile.params, profile.horizons
    if kind == "wave-rot":
        w = _wave_parts(profile, Y)
        return (w["m0"] * w["xr"] ** 2 + w["c"] * w["xth"] ** 2
                + w["b2"] * w["u"] ** 2 / (w["c"] * w["s"]) - w["b2"] * w["P"] ** 2 / w["m0"])
    r, th, xr, xp, xt = Y[:, 0], Y[:, 2], Y[:, 3], Y[:, 4], Y[:, 5]
    m0 = mu(p, r)
    base = m0 * xr * xr + p.c(th) * xt * xt + angular_B(p, hz, th) * xp * xp
    if kind == "mode-rot":
        return base - radial_D(p, hz, r) * xp * xp
    if kind == "mode-starrot":
        L, A = star_coefficients(profile, r)
        return base + L * xp * xr + A * xp * xp
    raise ValueError(f"unknown flow kind {kind!r}")


def symbol_scale(kind: str, profile: ExtensionProfile, Y):
    """Sum of the magnitudes of the individual terms of q; the drift yardstick."""
    Y = np.atleast_2d(np.asarray(Y, float))
    p, hz = profile.params, profile.horizons
    if kind == "wave-rot":
        w = _wave_parts(profile, Y)
        return (np.abs(w["m0"]) * w["xr"] ** 2 + w["c"] * w["xth"] ** 2
                + w["b2"] * w["u"] ** 2 / (w["c"] * w["s"]) + w["b2"] * w["P"] ** 2 / np.abs(w["m0"]))
    r, th, xr, xp, xt = Y[:, 0], Y[:, 2], Y[:, 3], Y[:, 4], Y[:, 5]
    base = (np.abs(mu(p, r)) * xr * xr + p.c(th) * xt * xt
            + np.abs(angular_B(p, hz, th)) * xp * xp)
    if kind == "mode-rot":
        return base + np.abs(radial_D(p, hz, r)) * xp * xp
    L, A = star_coefficients(profile, r)
    return base + np.abs(L * xp * xr) + np.abs(A) * xp * xp


def _conformal_correction(kind, profile, Y, dY):
    """Turn the field of q into that of p = q/rho^2."""
    a2 = profile.params.spin**2
    ir, ith, ixr, ixth = (1, 3, 5, 7) if kind == "wave-rot" else (0, 2, 3, 5)
    r, th = Y[:, ir], Y[:, ith]
    rho2 = r * r + a2 * np.cos(th) ** 2
    q = symbol_batch(kind, profile, Y)
    out = dY / rho2[:, None]
    out[:, ixr] += 2.0 * r * q / rho2**2
    out[:, ixth] += -2.0 * a2 * np.cos(th) * np.sin(th) * q / rho2**2
    return out


def rhs_batch(kind: str, profile: ExtensionProfile, Y, conformal: bool = True):
    Y = np.atleast_2d(np.asarray(Y, float))
    if kind == "mode-rot":
        dY = _mode_rhs(profile, Y, star=False)
    elif kind == "mode-starrot":
        dY = _mode_rhs(profile, Y, star=True)
    elif kind == "wave-rot":
        dY = _wave_rhs(profile, Y)
    else:
        raise ValueError(f"unknown flow kind {kind!r}")
    if not conformal:
        dY = _conformal_correction(kind, profile, Y, dY)
    return dY


def ham_rhs(kind: str, profile: ExtensionProfile, state, conformal: bool = True) -> np.ndarray:
    """Hamilton vector field at a single state."""
    return rhs_batch(kind, profile, np.asarray(state, float)[None, :], conformal)[0]


def carter_const(kind: str, profile: ExtensionProfile, Y):
    """The theta-separated conserved quantity of the flow."""
    Y = np.atleast_2d(np.asarray(Y, float))
    p, hz = profile.params, profile.horizons
    if kind == "wave-rot":
        w = _wave_parts(profile, Y)
        return w["c"] * w["xth"] ** 2 + w["b2"] * w["u"] ** 2 / (w["c"] * w["s"])
    th, xp, xt = Y[:, 2], Y[:, 4], Y[:, 5]
    return p.c(th) * xt * xt + angular_B(p, hz, th) * xp * xp


# -- single trajectories -------------------------------------------------------


@dataclass
class FlowState:
    kind: str
    y: np.ndarray
    q0: float = float("nan")

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")
        self.y = np.asarray(self.y, float)
        if self.y.shape != (_DIM[self.kind],):
            raise ValueError(f"{self.kind} states have {_DIM[self.kind]} components")

    @property
    def r(self) -> float:
        return float(self.y[1] if self.kind == "wave-rot" else self.y[0])


@dataclass
class Trajectory:
    kind: str
    s: np.ndarray
    states: np.ndarray
    q: np.ndarray
    K: np.ndarray
    scale: np.ndarray
    termination: str
    events: list = field(default_factory=list)

    @property
    def q_drift(self) -> float:
        return float(np.max(np.abs(self.q - self.q[0])) / max(np.max(self.scale), np.finfo(float).tiny))

    @property
    def K_drift(self) -> float:
        return float(np.max(np.abs(self.K - self.K[0])) / max(np.max(self.scale), np.finfo(float).tiny))

    @property
    def r(self) -> np.ndarray:
        return self.states[:, 1] if self.kind == "wave-rot" else self.states[:, 0]


_TERMINATION = {0: "span", 1: "event", -1: "step_failure", -2: "max_steps"}


def _r_index(kind):
    return 1 if kind == "wave-rot" else 0


def r_events(kind: str, thresholds):
    i = _r_index(kind)
    return [(lambda Y, t=t: Y[:, i] - t) for t in thresholds]


def _fiber_slice(kind):
    return slice(4, 8) if kind == "wave-rot" else slice(3, 6)


def integrate(kind: str, profile: ExtensionProfile, state, span: float, tol: float = 1e-10,
              r_thresholds=(), conformal: bool = True, xi_cap: float | None = None) -> Trajectory:
    """Integrate one bicharacteristic, stopping at the first r threshold crossed.

    ``xi_cap`` stops the run once the covector norm exceeds that multiple of
    its initial value, which happens on approach to a radial set.
    """
    if not 1e-13 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    st = state if isinstance(state, FlowState) else FlowState(kind, state)
    events = r_events(kind, r_thresholds)
    names = [f"r = {float(t)!r}" for t in r_thresholds]
    fs = _fiber_slice(kind)
    if xi_cap is not None:
        cap = xi_cap * float(np.linalg.norm(st.y[fs]))
        events.append(lambda Y: np.linalg.norm(Y[:, fs], axis=1) - cap)
        names.append(f"|xi| = {float(cap)!r}")
    res = integrate_batch(lambda Y: rhs_batch(kind, profile, Y, conformal), st.y[None, :], span,
                          rtol=tol, atol=tol * 1e-2, events=events, record=True)
    s, Y = res.trajectory(0)
    ev = [{"event": names[k], "s": sv} for _, k, sv in res.events]
    return Trajectory(kind, s, Y, symbol_batch(kind, profile, Y), carter_const(kind, profile, Y),
                      symbol_scale(kind, profile, Y), _TERMINATION[int(res.status[0])], ev)


# -- characteristic sampling ---------------------------------------------------


def _theta_range(tol: Tolerances):
    return tol.pole_margin, math.pi - tol.pole_margin


def _mode_r_window(profile, th, lo, hi):
    """Sub-intervals of (lo, hi) where D(r) > B(theta), i.e. mode-characteristic radii."""
    p, hz = profile.params, profile.horizons
    B = float(angular_B(p, hz, th))
    g = lambda r: float(radial_D(p, hz, r)) - B  # noqa: E731
    parts = []
    if lo < hz.r0 and g(lo) > 0:
        parts.append((lo, brentq(g, lo, hz.r0, xtol=1e-14)))
    if hi > hz.r0 and g(hi) > 0:
        parts.append((brentq(g, hz.r0, hi, xtol=1e-14), hi))
    return parts


def sample_mode_characteristic(profile: ExtensionProfile, rng: np.random.Generator, n: int,
                               epsilon: float, tol: Tolerances = DEFAULT, max_tries: int = 200):
    """Draw n unit-norm characteristic mode-rot states with r in (r_e + eps, r_c - eps).

    Returns an empty array when the characteristic set does not meet the region
    (for instance when a = 0).
    """
    hz = profile.horizons
    lo, hi = hz.r_e + epsilon, hz.r_c - epsilon
    t0, t1 = _theta_range(tol)
    if profile.params.spin == 0 or not _mode_r_window(profile, math.pi / 2, lo, hi):
        # B is smallest at the equator, so an empty equatorial window means no samples
        return np.zeros((0, 6))
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries * max(n, 1):
            raise SampleConstructionFailure("could not construct characteristic mode samples")
        th = rng.uniform(t0, t1)
        parts = _mode_r_window(profile, th, lo, hi)
        lens = np.array([b - a for a, b in parts])
        if lens.sum() <= 0:
            continue
        j = rng.choice(len(parts), p=lens / lens.sum())
        r = rng.uniform(*parts[j])
        p = profile.params
        Rv = (float(radial_D(p, hz, r)) - float(angular_B(p, hz, th)))
        m0 = float(mu(p, r))
        if Rv <= 0 or m0 <= 0:
            continue
        xp = rng.choice([-1.0, 1.0])
        xr = math.sqrt(Rv / m0) * rng.uniform(-1.0, 1.0)
        xth2 = (Rv - m0 * xr * xr) / float(p.c(th))
        if xth2 < 0:
            continue
        y = np.array([r, 0.0, th, xr, xp, math.sqrt(xth2)])
        y[3:] /= np.linalg.norm(y[3:])
        out.append(y)
    return np.array(out).reshape(-1, 6)


def sample_wave_characteristic(profile: ExtensionProfile, rng: np.random.Generator, n: int,
                               epsilon: float, tol: Tolerances = DEFAULT, max_tries: int = 1000):
    """Draw n unit-norm characteristic wave-rot states with r in (r_e + eps, r_c - eps).

    (r, theta, xi_tau, xi_r, xi_psi) are drawn first and xi_theta >= 0 is solved from q = 0.
    """
    hz = profile.horizons
    lo, hi = hz.r_e + epsilon, hz.r_c - epsilon
    t0, t1 = _theta_range(tol)
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries * max(n, 1):
            raise SampleConstructionFailure("could not construct characteristic wave samples")
        y = np.zeros(8)
        y[1] = rng.uniform(lo, hi)
        y[3] = rng.uniform(t0, t1)
        y[4], y[5], y[6] = rng.normal(size=3)
        q_rest = symbol_batch("wave-rot", profile, y[None, :])[0]
        xth2 = -q_rest / float(profile.params.c(y[3]))
        if xth2 < 0:
            continue
        y[7] = math.sqrt(xth2)
        y[4:] /= np.linalg.norm(y[4:])
        out.append(y)
    return np.array(out).reshape(-1, 8)


# -- escape function -----------------------------------------------------------


def _mode_escape_terms(profile, Y):
    p, hz = profile.params, profile.horizons
    r, xr, xp = Y[:, 0], Y[:, 3], Y[:, 4]
    m0, m1 = mu(p, r), mu_derivatives(p, r, 1)
    hr = 2.0 * m0 * xr
    h2r = 2.0 * m0 * m1 * xr * xr + 2.0 * m0 * radial_D(p, hz, r, 1) * xp * xp
    return r - hz.r0, hr, h2r


def select_escape_constant(d, hr, h2r, c_max: float = 2.0**40):
    """Smallest C = 2^j >= 1 with sign(2 C d hr^2 + h2r) = sign(d) at all samples.

    ``d`` is the signed distance to the critical radius, ``hr`` the first and
    ``h2r`` the second flow derivative of the radius. Returns ``(C, margin)``
    with margin the worst relative value of ``d (2 C d hr^2 + h2r)``; C is None
    when the cap is reached.
    """
    C = 1.0
    while C <= c_max:
        val = np.sign(d) * (2.0 * C * d * hr * hr + h2r)
        norm = 2.0 * C * d * d * hr * hr + np.abs(h2r)
        rel = val / np.where(norm > 0, norm, 1.0)
        margin = float(np.min(rel)) if len(rel) else 1.0
        if margin > 0:
            return C, margin
        C *= 2.0
    return None, margin


def mode_convexity_check(profile: ExtensionProfile, rng, n: int, epsilon: float) -> dict:
    """At characteristic points with H_q r = 0, sign(H_q^2 r) = sign(r - r0)."""
    Y = sample_mode_characteristic(profile, rng, n, epsilon)
    if len(Y) == 0:
        return {"n": 0, "passed": True, "violations": 0}
    p, hz = profile.params, profile.horizons
    # project onto xi_r = 0 inside the characteristic set
    r, th, xp = Y[:, 0], Y[:, 2], Y[:, 4]
    Rv = radial_D(p, hz, r) - angular_B(p, hz, th)
    Y = Y.copy()
    Y[:, 3] = 0.0
    Y[:, 5] = np.sqrt(Rv / p.c(th)) * np.abs(xp)
    d, hr, h2r = _mode_escape_terms(profile, Y)
    bad = int(np.sum(np.sign(h2r) != np.sign(d)))
    return {"n": len(Y), "violations": bad, "max_abs_hr": float(np.max(np.abs(hr))),
            "passed": bad == 0}


def _run_both_ways(kind, profile, Y, span, tol, thresholds, monitor=None):
    fun = lambda Z: rhs_batch(kind, profile, Z)  # noqa: E731
    Y2 = np.concatenate([Y, Y])
    spans = np.concatenate([np.full(len(Y), span), np.full(len(Y), -span)])
    return integrate_batch(fun, Y2, spans, rtol=tol, atol=tol * 1e-2,
                           events=r_events(kind, thresholds), monitor=monitor)


def mode_no_trapping_experiment(profile: ExtensionProfile, epsilon: float | None = None,
                                n_samples: int = 200, seed: int = 1, span: float = 1e4,
                                tol: float = 1e-9, n_escape: int = 10_000, stream: int = 0) -> dict:
    """Every characteristic mode bicharacteristic leaves (r_e + eps, r_c - eps) both ways."""
    hz = profile.horizons
    width = hz.r_c - hz.r_e
    eps = 0.05 * width if epsilon is None else float(epsilon)
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream, 8]))
    Y = sample_mode_characteristic(profile, rng, n_samples, eps)
    report = {"epsilon": eps, "n_samples": int(len(Y)), "span": span, "seed": seed}
    if len(Y):
        res = _run_both_ways("mode-rot", profile, Y, span, tol, (hz.r_e + eps, hz.r_c - eps))
        exited = res.status == EVENT
        report.update(n_exit=int(np.sum(exited)), n_runs=int(len(exited)),
                      max_exit_s=float(np.max(np.abs(res.s[exited]))) if exited.any() else 0.0,
                      all_exit=bool(exited.all()))
    else:
        report.update(n_exit=0, n_runs=0, max_exit_s=0.0, all_exit=True)
    Z = sample_mode_characteristic(profile, rng, n_escape, eps)
    if len(Z):
        C, margin = select_escape_constant(*_mode_escape_terms(profile, Z))
    else:
        C, margin = 1.0, 1.0
    report.update(n_escape_samples=int(len(Z)), escape_C=C, escape_margin=margin,
                  escape_ok=C is not None)
    report["passed"] = bool(report["all_exit"] and report["escape_ok"])
    return report


# -- horizons --------------------------------------------------------------------


def _star_char_xi_r(profile, r, th, xp, xt):
    """Both roots xi_r of the STARROT mode symbol, or None when complex."""
    p, hz = profile.params, profile.horizons
    m0 = float(mu(p, r))
    L, A = (float(v) for v in star_coefficients(profile, r))
    cc = float(p.c(th)) * xt * xt + (float(angular_B(p, hz, th)) + A) * xp * xp
    bb = L * xp
    if abs(m0) < 1e-300:
        return None if bb == 0 else (-cc / bb,)
    disc = bb * bb - 4.0 * m0 * cc
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    # numerically stable pair of roots
    qv = -0.5 * (bb + math.copysign(sq, bb)) if bb != 0 else 0.5 * sq
    roots = []
    if qv != 0:
        roots.append(cc / qv)
    roots.append(qv / m0)
    return tuple(roots)


def _sample_s_class(profile, rng, n, r_lo, r_hi, want: str, tol: Tolerances, max_tries=400):
    p = profile.params
    t0, t1 = _theta_range(tol)
    out = []
    tries = 0
    while len(out) < n and tries < max_tries * n:
        tries += 1
        r = rng.uniform(r_lo, r_hi)
        th = rng.uniform(t0, t1)
        xp = rng.uniform(-1.0, 1.0) if p.spin != 0 else 0.0
        xt = rng.uniform(-1.0, 1.0)
        roots = _star_char_xi_r(profile, r, th, xp, xt)
        if not roots:
            continue
        xr = roots[int(rng.integers(len(roots)))]
        xi = np.array([xr, xp, xt])
        pair = float(s_pairing(profile, r, th, xi))
        if pair == 0:
            continue
        if (pair > 0) != (want == "plus"):
            xi = -xi
        y = np.array([r, 0.0, th, *xi])
        y[3:] /= np.linalg.norm(y[3:])
        out.append(y)
    return np.array(out).reshape(-1, 6)


def horizon_crossing_check(profile: ExtensionProfile, n_samples: int = 50, seed: int = 1,
                           span: float = 1e4, tol: float = 1e-10, stream: int = 0,
                           tolerances: Tolerances = DEFAULT) -> dict:
    """Radial-point structure at the two horizons in the STARROT chart."""
    p, hz = profile.params, profile.horizons
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream, 9]))
    a, b = p.spin, p.b
    den = hz.r0**2 + a * a
    t0, t1 = _theta_range(tolerances)
    rep = {"seed": seed}

    # (i) H_q r at the horizons against the closed form
    worst = 0.0
    for rh, sgn in ((hz.r_e, 1.0), (hz.r_c, -1.0)):
        w = (hz.r0**2 - rh * rh) / den
        for _ in range(n_samples):
            xi = rng.normal(size=3)
            y = np.array([rh, 0.0, rng.uniform(t0, t1), *xi])
            got = ham_rhs("mode-starrot", profile, y)[0]
            want = sgn * 2.0 * a * b * w * xi[1]
            scale = max(abs(want), 2.0 * abs(a * b * w * xi[1]), abs(2.0 * mu(p, rh) * xi[0]), 1e-300)
            worst = max(worst, abs(got - want) / max(scale, np.linalg.norm(xi)))
    rep["hqr_closed_form_rel_err"] = worst
    rep["hqr_ok"] = worst <= 1e-9

    # (iii) beta_1 and (iv) the conormal restriction
    m1e = float(mu_derivatives(p, hz.r_e, 1))
    rep["beta1"] = 2.0 * m1e
    y = np.array([hz.r_e, 0.0, 1.0, 1.0, 0.0, 0.0])
    f = ham_rhs("mode-starrot", profile, y)
    we = (hz.r0**2 - hz.r_e**2) / den
    beta1_num = -2.0 * f[3] / y[3] ** 2
    conormal = np.array([f[0], f[1] / y[3], f[2], f[3] / y[3], f[4], f[5]])
    expected = np.array([0.0, 2.0 * a * b * we, 0.0, -m1e * y[3], 0.0, 0.0])
    cn_err = float(np.max(np.abs(conormal - expected)) / max(1.0, np.max(np.abs(expected))))
    rep["beta1_flow"] = float(beta1_num)
    rep["conormal_rel_err"] = cn_err
    rep["beta1_ok"] = bool(rep["beta1"] > 0 and abs(beta1_num - rep["beta1"]) <= 1e-9 * abs(rep["beta1"]))
    rep["conormal_ok"] = cn_err <= 1e-9

    # fiber growth on the conormal bundle: xi_r(s) = xi_r0 / (1 + mu'(r_e) xi_r0 s)
    # backwards the fiber grows; stop at a tenfold increase, before the blow-up
    traj = integrate("mode-starrot", profile, y, -0.9 / (m1e * y[3]), tol=tol)
    law = y[3] / (1.0 + m1e * y[3] * traj.s)
    rep["conormal_law_rel_err"] = float(np.max(np.abs(traj.states[:, 3] - law) / np.abs(law)))
    rep["conormal_r_drift"] = float(np.max(np.abs(traj.states[:, 0] - hz.r_e)))
    rep["conormal_law_ok"] = rep["conormal_law_rel_err"] <= 1e-7

    # (ii) S+ data near each horizon crosses it and reaches the slab end; S- backwards
    runs = []
    inner = 0.1 * (hz.r0 - hz.r_e), 0.1 * (hz.r_c - hz.r0)
    d = profile.delta
    windows = {
        "e": (hz.r_e - 0.5 * d, hz.r_e + inner[0], hz.r_e - d),
        "c": (hz.r_c - inner[1], hz.r_c + 0.5 * d, hz.r_c + d),
    }
    results = {}
    class_ok = True
    for name, (lo, hi, target) in windows.items():
        for cls, direction in (("plus", 1.0), ("minus", -1.0)):
            Y = _sample_s_class(profile, rng, n_samples, lo, hi, cls, tolerances)
            if len(Y) == 0:
                results[f"{name}_{cls}"] = {"n": 0, "reached": 0}
                continue
            sign0 = np.sign(s_pairing(profile, Y[:, 0], Y[:, 2], Y[:, 3:]))
            flips = np.zeros(len(Y), dtype=bool)

            def monitor(rows, s, Z, sign0=sign0, flips=flips):
                sg = np.sign(s_pairing(profile, Z[:, 0], Z[:, 2], Z[:, 3:]))
                flips[rows] |= sg != sign0[rows]

            thr = (target, hz.r0)
            res = integrate_batch(lambda Z: rhs_batch("mode-starrot", profile, Z), Y,
                                  direction * span, rtol=tol, atol=tol * 1e-2,
                                  events=r_events("mode-starrot", thr), monitor=monitor)
            reached = (res.status == EVENT) & (res.event_index == 0)
            results[f"{name}_{cls}"] = {"n": int(len(Y)), "reached": int(reached.sum())}
            runs.append(bool(reached.all()))
            class_ok &= not flips.any()
    rep["crossing"] = results
    rep["crossing_ok"] = all(runs)
    rep["s_class_invariant"] = bool(class_ok)
    rep["passed"] = bool(rep["hqr_ok"] and rep["beta1_ok"] and rep["conormal_ok"]
                         and rep["conormal_law_ok"] and rep["crossing_ok"] and class_ok)
    return rep


# -- trapped orbits ----------------------------------------------------------------


def feasible_theta(orbit: TrappedOrbit, tol: Tolerances = DEFAULT):
    """A polar angle at which a null covector on the orbit's trapped fiber exists.

    The equator is preferred; otherwise the minimiser of the angular Carter
    term is used. Returns None when the fiber carries no real covector.
    """
    p = orbit.params
    target = p.b**2 * orbit.F_trap
    g = lambda th: float(wave_carter_theta(p, orbit.xi_t, orbit.xi_phi, th, 0.0))  # noqa: E731
    if g(math.pi / 2) < target:
        return math.pi / 2
    t0, t1 = _theta_range(tol)
    res = minimize_scalar(g, bounds=(t0, t1), method="bounded", options={"xatol": 1e-12})
    return float(res.x) if res.fun < target else None


def wave_state_on_orbit(profile: ExtensionProfile, orbit: TrappedOrbit, theta0: float,
                        r: float | None = None, xi_r: float = 0.0) -> np.ndarray:
    """A characteristic wave-rot state on the orbit's fiber, xi_theta >= 0 from q = 0."""
    p, hz = profile.params, profile.horizons
    k = p.spin / (hz.r0**2 + p.spin**2)
    y = np.zeros(8)
    y[1] = orbit.r_trap if r is None else r
    y[3] = theta0
    y[4] = orbit.xi_t + k * orbit.xi_phi
    y[5] = xi_r
    y[6] = orbit.xi_phi
    q_rest = symbol_batch("wave-rot", profile, y[None, :])[0]
    xth2 = -q_rest / float(p.c(theta0))
    if xth2 < 0:
        raise DomainError("no real xi_theta closes the state onto the characteristic set")
    y[7] = math.sqrt(xth2)
    return y


def _fit_rate(s, dist, lo, hi):
    """Least-squares slope of log(dist) over the window lo < dist < hi, shrunk until R^2 > 0.999."""
    sel = (dist > lo) & (dist < hi)
    ss, ld = s[sel], np.log(dist[sel])
    for _ in range(20):
        if len(ss) < 5:
            return float("nan"), 0.0
        A = np.vstack([ss, np.ones_like(ss)]).T
        coef, *_ = np.linalg.lstsq(A, ld, rcond=None)
        pred = A @ coef
        ss_res = float(np.sum((ld - pred) ** 2))
        ss_tot = float(np.sum((ld - ld.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
        if r2 > 0.999:
            return float(coef[0]), r2
        keep = int(0.9 * len(ss))
        # drop the points farthest from the trapped set (nonlinear regime)
        order = np.argsort(ld)[:keep]
        order.sort()
        ss, ld = ss[order], ld[order]
    return float(coef[0]), r2


def wave_escape_terms(orbit: TrappedOrbit, Y):
    """(E-growth factor, H_q E / exp) pieces for E = exp(C d^2) H_q d^2, d = r - r_trap."""
    p = orbit.params
    r, xr = Y[:, 1], Y[:, 5]
    d = r - orbit.r_trap
    m0, m1 = mu(p, r), mu_derivatives(p, r, 1)
    Fp = F_eval(p, orbit.xi_t, orbit.xi_phi, r, 1)
    h1 = 4.0 * m0 * d * xr
    h2 = 4.0 * m0 * m1 * d * xr * xr + 8.0 * m0 * m0 * xr * xr + 4.0 * m0 * p.b**2 * d * Fp
    return d, m0, xr, h1, h2


def _wave_escape_select(orbit, Y, c_max=2.0**40):
    d, m0, xr, h1, h2 = wave_escape_terms(orbit, Y)
    C = 1.0
    while C <= c_max:
        val = 16.0 * C * m0 * m0 * d * d * xr * xr + h2
        norm = 16.0 * C * m0 * m0 * d * d * xr * xr + np.abs(h2)
        rel = np.where(norm > 0, val / np.where(norm > 0, norm, 1.0), 0.0)
        if np.all(rel >= -1e-12):
            return C, float(np.min(rel))
        C *= 2.0
    return None, float(np.min(rel))


def wave_trapping_experiment(profile: ExtensionProfile, orbit: TrappedOrbit, theta0: float | None = None,
                             perturbation: float | None = None, span: float | None = None,
                             tol: float = 1e-10, n_generic: int = 20, seed: int = 1,
                             stream: int = 0) -> dict:
    """Dynamics near one fiber of the trapped set for the flow of q.

    Rates are measured in the flow parameter of q = rho^2 p, where the radial
    motion decouples from theta and the expansion rate is sqrt(2 mu b^2 F'').
    """
    p, hz = profile.params, profile.horizons
    width = hz.r_c - hz.r_e
    lam = orbit.rate_q()
    th0 = feasible_theta(orbit) if theta0 is None else theta0
    if th0 is None:
        raise DomainError("the trapped fiber carries no real null covector")
    delta0 = 1e-8 * width if perturbation is None else perturbation
    fun = lambda Z: rhs_batch("wave-rot", profile, Z)  # noqa: E731
    rep = {"r_trap": orbit.r_trap, "theta0": th0, "rate_expected": lam,
           "rate_expected_p": orbit.normal_rate(th0)}
    drifts = []

    def log_drift(Y):
        q = symbol_batch("wave-rot", profile, Y)
        K = carter_const("wave-rot", profile, Y)
        sc = np.max(symbol_scale("wave-rot", profile, Y))
        drifts.append((float(np.max(np.abs(q - q[0])) / sc), float(np.max(np.abs(K - K[0])) / sc)))

    # (i) on the trapped set
    span_on = 5.0 / lam if span is None else span
    y_on = wave_state_on_orbit(profile, orbit, th0)
    res = integrate_batch(fun, y_on[None, :], span_on, rtol=tol, atol=tol * 1e-2, record=True)
    s_on, Y_on = res.trajectory(0)
    log_drift(Y_on)
    dev = float(np.max(np.abs(Y_on[:, 1] - orbit.r_trap)))
    rep.update(on_gamma_span=span_on, on_gamma_max_dev=dev, on_gamma_ok=dev <= 10 * tol)

    # (ii) unstable branch, forward
    band = 0.01 * width
    r_u = orbit.r_trap + delta0
    y_u = wave_state_on_orbit(profile, orbit, th0, r_u, float(manifold_xi_r(orbit, r_u, "unstable")))
    ev = [lambda Z: np.abs(Z[:, 1] - orbit.r_trap) - 2.0 * band]
    res = integrate_batch(fun, y_u[None, :], 60.0 / lam, rtol=tol, atol=tol * 1e-2, events=ev, record=True)
    s_u, Y_u = res.trajectory(0)
    log_drift(Y_u)
    rate_u, r2_u = _fit_rate(s_u, np.abs(Y_u[:, 1] - orbit.r_trap), 0.0, band)
    # invariance of the unstable manifold: mu xi_r^2 - b^2 (F - F_trap)
    inv = np.abs(mu(p, Y_u[:, 1]) * Y_u[:, 5] ** 2
                 - p.b**2 * (F_eval(p, orbit.xi_t, orbit.xi_phi, Y_u[:, 1]) - orbit.F_trap))
    rep.update(rate_unstable=rate_u, r2_unstable=r2_u,
               rate_unstable_rel_err=abs(rate_u - lam) / lam,
               manifold_invariance=float(np.max(inv) / np.max(symbol_scale("wave-rot", profile, Y_u))))

    # (iii) stable branch, forward: converges onto the trapped set
    r_s = orbit.r_trap + band
    y_s = wave_state_on_orbit(profile, orbit, th0, r_s, float(manifold_xi_r(orbit, r_s, "stable")))
    floor = 1e3 * delta0
    ev = [lambda Z: np.abs(Z[:, 1] - orbit.r_trap) - floor]
    res = integrate_batch(fun, y_s[None, :], 60.0 / lam, rtol=tol, atol=tol * 1e-2, events=ev, record=True)
    s_s, Y_s = res.trajectory(0)
    log_drift(Y_s)
    rate_s, r2_s = _fit_rate(s_s, np.abs(Y_s[:, 1] - orbit.r_trap), floor, band)
    rep.update(rate_stable=rate_s, r2_stable=r2_s, rate_stable_rel_err=abs(-rate_s - lam) / lam,
               stable_reached_floor=bool(res.status[0] == EVENT))

    # (iv)/(v) generic perturbations: escape function monotone, all exit
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream, 11]))
    eps = 0.05 * width
    Yg = []
    while len(Yg) < n_generic:
        r = orbit.r_trap + rng.uniform(-0.2, 0.2) * width
        r = min(max(r, hz.r_e + 2 * eps), hz.r_c - 2 * eps)
        xr = rng.normal() * 0.1 * math.sqrt(orbit.F_trap / max(float(mu(p, r)), 1e-300))
        try:
            Yg.append(wave_state_on_orbit(profile, orbit, th0, r, xr))
        except DomainError:
            continue
    Yg = np.array(Yg)
    sampled = []

    def monitor(rows, s, Z):
        sampled.append(Z)

    res = _run_both_ways("wave-rot", profile, Yg, 1e4, tol,
                         (hz.r_e + eps, hz.r_c - eps), monitor=monitor)
    Zall = np.concatenate(sampled)
    C, margin = _wave_escape_select(orbit, Zall)
    rep.update(n_generic=int(len(Yg)), generic_all_exit=bool(np.all(res.status == EVENT)),
               escape_C=C, escape_margin=margin, escape_ok=C is not None)
    rep["q_drift_max"] = max(d[0] for d in drifts)
    rep["K_drift_max"] = max(d[1] for d in drifts)
    rep["conservation_ok"] = max(rep["q_drift_max"], rep["K_drift_max"]) <= 1e-8
    rep["manifold_invariance_ok"] = rep["manifold_invariance"] <= 1e-8
    rep["passed"] = bool(rep["on_gamma_ok"] and rep["rate_unstable_rel_err"] <= 0.05
                         and rep["rate_stable_rel_err"] <= 0.05 and rep["generic_all_exit"]
                         and rep["escape_ok"] and rep["conservation_ok"]
                         and rep["manifold_invariance_ok"])
    return rep


def wave_convexity_check(profile: ExtensionProfile, orbit: TrappedOrbit, rng, n: int) -> dict:
    """At characteristic points with xi_r = 0: H_q^2 (r - r_trap)^2 = 4 (r - r_trap) mu b^2 F' >= 0."""
    p, hz = profile.params, profile.horizons
    eps = 0.05 * (hz.r_c - hz.r_e)
    th0 = feasible_theta(orbit)
    if th0 is None:
        return {"n": 0, "passed": True}
    worst = 0.0
    bad = 0
    count = 0
    for _ in range(n):
        r = rng.uniform(hz.r_e + eps, hz.r_c - eps)
        try:
            y = wave_state_on_orbit(profile, orbit, th0, r, 0.0)
        except DomainError:
            continue
        f = ham_rhs("wave-rot", profile, y)
        d = r - orbit.r_trap
        # d^2/ds^2 (r - r_trap)^2 = 2 r'^2 + 2 d r''; with xi_r = 0, r'' = 2 mu xi_r'
        second = 2.0 * f[1] ** 2 + 2.0 * d * (2.0 * mu(p, r) * f[5])
        closed = 4.0 * d * mu(p, r) * p.b**2 * F_eval(p, orbit.xi_t, orbit.xi_phi, r, 1)
        worst = max(worst, abs(second - closed) / max(abs(closed), 1e-300))
        bad += int(closed < 0)
        count += 1
    return {"n": count, "violations": bad, "max_rel_err": worst, "passed": bad == 0 and worst < 1e-10}


def jacobian_check(profile: ExtensionProfile, orbit: TrappedOrbit, theta0: float | None = None,
                   step: float = 1e-5) -> dict:
    """Central-difference Jacobian of the (r, xi_r) part of the p-flow at the trapped set."""
    th0 = feasible_theta(orbit) if theta0 is None else theta0
    if th0 is None:
        raise DomainError("the trapped fiber carries no real null covector")
    y = wave_state_on_orbit(profile, orbit, th0)
    cols = (1, 5)
    J = np.zeros((2, 2))
    for j, c in enumerate(cols):
        h = step * max(1.0, abs(y[c]))
        yp, ym = y.copy(), y.copy()
        yp[c] += h
        ym[c] -= h
        df = (ham_rhs("wave-rot", profile, yp, conformal=False)
              - ham_rhs("wave-rot", profile, ym, conformal=False)) / (2.0 * h)
        J[:, j] = df[list(cols)]
    A = linearization(orbit, th0)["matrix"]
    err = float(np.max(np.abs(J - A)) / np.max(np.abs(A)))
    return {"theta0": th0, "fd": J.tolist(), "closed_form": A.tolist(), "rel_err": err,
            "passed": err <= 1e-6}
