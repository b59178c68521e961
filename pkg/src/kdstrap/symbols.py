"""Metric and dual-metric components, principal symbols, and the S+/S- splitting.

Every symbol here is the conformal multiple ``q = rho^2 p`` of the principal
symbol ``p = G(xi, xi)``; it has the same characteristic set and the same
bicharacteristics up to reparametrisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charts import CHARTS, ChartPoint, ExtensionProfile, check_domain
from .config import DEFAULT, Tolerances
from .errors import DegenerateClassification, NotCharacteristic
from .radial import HorizonData, SpacetimeParams, mu, mu_derivatives

__all__ = [
    "MetricEval",
    "dual_metric_rho2",
    "metric_lower",
    "metric_components",
    "quadratic_form",
    "wave_symbol_q",
    "mode_symbol_q",
    "angular_B",
    "radial_D",
    "star_coefficients",
    "r0_definiteness_check",
    "s_pairing",
    "classify_s_pm",
]


def _flags(chart: str) -> tuple[bool, bool]:
    if chart not in CHARTS:
        raise ValueError(f"unknown chart {chart!r}")
    return chart in ("ROT", "STARROT"), chart in ("STAR", "STARROT")


def _frame_vectors(params: SpacetimeParams, hz: HorizonData, r, theta, rotating: bool):
    """Coefficients of the two Killing combinations in the (time, angle) slots.

    Returns ``u = (u_T, u_A)`` for ``a sin^2 xi_t + xi_phi`` and
    ``P = (P_T, P_A)`` for ``(r^2 + a^2) xi_t + a xi_phi`` expressed in the chart.
    """
    a = params.spin
    k = a / (hz.r0**2 + a * a) if rotating else 0.0
    s = np.sin(theta) ** 2
    ra = r * r + a * a
    u = (a * s, 1.0 - a * k * s)
    P = (ra, a - k * ra)
    return u, P


def dual_metric_rho2(profile: ExtensionProfile, chart: str, r, theta):
    """rho^2 G as an array of shape ``(..., 4, 4)`` in the chart cobasis."""
    params, hz = profile.params, profile.horizons
    rot, star = _flags(chart)
    r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
    b = params.b
    s = np.sin(theta) ** 2
    c = params.c(theta)
    m0 = mu(params, r)
    (uT, uA), (pT, pA) = _frame_vectors(params, hz, r, theta, rot)
    uT, uA, pT, pA = np.broadcast_arrays(uT, uA, pT, pA)
    Y = profile.X(r) if star else 1.0 / m0
    M = np.zeros(r.shape + (4, 4))
    ang = b * b / (c * s)
    for i, (ui, pi) in ((0, (uT, pT)), (2, (uA, pA))):
        for j, (uj, pj) in ((0, (uT, pT)), (2, (uA, pA))):
            M[..., i, j] = ang * ui * uj - b * b * Y * pi * pj
    M[..., 1, 1] = m0
    M[..., 3, 3] = c
    if star:
        fb = b * profile.f(r)
        M[..., 0, 1] = M[..., 1, 0] = -fb * pT
        M[..., 2, 1] = M[..., 1, 2] = -fb * pA
    return M


def metric_lower(profile: ExtensionProfile, chart: str, r, theta):
    """The metric g itself, shape ``(..., 4, 4)``, from its one-form representation."""
    params, hz = profile.params, profile.horizons
    rot, star = _flags(chart)
    r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
    a, b = params.spin, params.b
    k = a / (hz.r0**2 + a * a) if rot else 0.0
    s = np.sin(theta) ** 2
    c = params.c(theta)
    rho2 = r * r + a * a * np.cos(theta) ** 2
    ra = r * r + a * a
    m0 = mu(params, r)
    al1 = np.zeros(r.shape + (4,))
    al2 = np.zeros(r.shape + (4,))
    al1[..., 0] = 1.0 - a * k * s
    al1[..., 2] = -a * s
    al2[..., 0] = a - k * ra
    al2[..., 2] = -ra
    g = (-(m0 / (b * b * rho2))[..., None, None] * al1[..., :, None] * al1[..., None, :]
         + (c * s / (b * b * rho2))[..., None, None] * al2[..., :, None] * al2[..., None, :])
    g[..., 3, 3] += rho2 / c
    if star:
        g[..., 1, 1] += rho2 * profile.X(r)
        fb = profile.f(r) / b
        for j in (0, 2):
            g[..., 1, j] -= fb * al1[..., j]
            g[..., j, 1] -= fb * al1[..., j]
    else:
        g[..., 1, 1] += rho2 / m0
    return g


@dataclass(frozen=True)
class MetricEval:
    chart: str
    g: np.ndarray
    G: np.ndarray
    rho2: float

    def identity_error(self) -> float:
        return float(np.max(np.abs(self.g @ self.G - np.eye(4))))

    def signature(self) -> tuple[int, int]:
        ev = np.linalg.eigvalsh(self.g)
        return int(np.sum(ev < 0)), int(np.sum(ev > 0))


def metric_components(profile: ExtensionProfile, point: ChartPoint,
                      tol: Tolerances = DEFAULT) -> MetricEval:
    check_domain(point.chart, point.r, point.theta, profile.horizons, profile, tol)
    r, th = point.r, point.theta
    rho2 = r * r + profile.params.spin**2 * math.cos(th) ** 2
    G = dual_metric_rho2(profile, point.chart, r, th) / rho2
    g = metric_lower(profile, point.chart, r, th)
    return MetricEval(point.chart, g, G, rho2)


def quadratic_form(M, xi):
    xi = np.asarray(xi, float)
    return np.einsum("...i,...ij,...j->...", xi, M, xi)


# -- wave symbol in ROT --------------------------------------------------------


def wave_symbol_q(params: SpacetimeParams, horizons: HorizonData, r, theta, xi):
    """q on T*M in ROT components ``xi = (xi_tau, xi_r, xi_psi, xi_theta)``."""
    xi = np.asarray(xi, float)
    x_tau, x_r, x_psi, x_th = (xi[..., i] for i in range(4))
    a, b = params.spin, params.b
    r0sq = horizons.r0**2
    s = np.sin(theta) ** 2
    c = params.c(theta)
    v = (r0sq + a * a * np.cos(theta) ** 2) / (r0sq + a * a)
    w = (r0sq - r * r) / (r0sq + a * a)
    u = a * s * x_tau + v * x_psi
    P = (r * r + a * a) * x_tau + a * w * x_psi
    m0 = mu(params, r)
    return m0 * x_r**2 + c * x_th**2 + b * b * u * u / (c * s) - b * b * P * P / m0


# -- mode symbol ---------------------------------------------------------------


def angular_B(params: SpacetimeParams, horizons: HorizonData, theta, order: int = 0):
    """B(theta) = K (r0^2 + a^2 cos^2)^2 / (c sin^2) with K = b^2/(r0^2 + a^2)^2."""
    a2 = params.spin**2
    r0sq = horizons.r0**2
    K = params.b**2 / (r0sq + a2) ** 2
    cs, sn = np.cos(theta), np.sin(theta)
    n = r0sq + a2 * cs * cs
    d = params.c(theta) * sn * sn
    if order == 0:
        return K * n * n / d
    dn = -2.0 * a2 * cs * sn
    dd = params.dc(theta) * sn * sn + params.c(theta) * 2.0 * sn * cs
    return K * (2.0 * n * dn / d - n * n * dd / (d * d))


def radial_D(params: SpacetimeParams, horizons: HorizonData, r, order: int = 0):
    """D(r) = K a^2 (r0^2 - r^2)^2 / mu (ROT chart, singular at horizons)."""
    a2 = params.spin**2
    r0sq = horizons.r0**2
    K = params.b**2 / (r0sq + a2) ** 2
    e = r0sq - r * r
    m0 = mu(params, r)
    if order == 0:
        return K * a2 * e * e / m0
    m1 = mu_derivatives(params, r, 1)
    return K * a2 * (-4.0 * r * e / m0 - e * e * m1 / (m0 * m0))


def star_coefficients(profile: ExtensionProfile, r, order: int = 0):
    """STARROT radial coefficients ``(L, A)`` of the mode symbol.

    q = mu xi_r^2 + L xi_psi xi_r + c xi_theta^2 + (B + A) xi_psi^2 with
    L = -2 a b f w and A = -b^2 a^2 w^2 (1 - f^2)/mu, w = (r0^2 - r^2)/(r0^2 + a^2).
    ``order=1`` returns the r-derivatives.
    """
    params, hz = profile.params, profile.horizons
    a, b = params.spin, params.b
    den = hz.r0**2 + a * a
    w = (hz.r0**2 - r * r) / den
    f, X = profile.f(r), profile.X(r)
    if order == 0:
        return -2.0 * a * b * f * w, -(b * b * a * a) * w * w * X
    dw = -2.0 * r / den
    df, dX = profile.f(r, 1), profile.X(r, 1)
    dL = -2.0 * a * b * (df * w + f * dw)
    dA = -(b * b * a * a) * (2.0 * w * dw * X + w * w * dX)
    return dL, dA


def mode_symbol_q(profile: ExtensionProfile, r, theta, xi3, chart: str = "ROT"):
    """Mode symbol for covectors ``(xi_r, xi_psi, xi_theta)`` with xi_tau = 0."""
    params, hz = profile.params, profile.horizons
    xi3 = np.asarray(xi3, float)
    x_r, x_psi, x_th = xi3[..., 0], xi3[..., 1], xi3[..., 2]
    m0 = mu(params, r)
    c = params.c(theta)
    B = angular_B(params, hz, theta)
    if chart == "ROT":
        return m0 * x_r**2 + c * x_th**2 + (B - radial_D(params, hz, r)) * x_psi**2
    if chart == "STARROT":
        L, A = star_coefficients(profile, r)
        return m0 * x_r**2 + L * x_psi * x_r + c * x_th**2 + (B + A) * x_psi**2
    raise ValueError(f"mode symbol is defined in ROT or STARROT, not {chart!r}")


def r0_definiteness_check(profile: ExtensionProfile, theta_grid=None,
                          tol: Tolerances = DEFAULT) -> dict:
    """Positive definiteness of the mode symbol at r = r0 over a theta grid."""
    params, hz = profile.params, profile.horizons
    if theta_grid is None:
        tm = tol.pole_margin
        theta_grid = np.linspace(tm, math.pi - tm, 257)
    th = np.asarray(theta_grid, float)
    mu0 = float(mu(params, hz.r0))
    c_min = float(np.min(params.c(th)))
    psi_coef = angular_B(params, hz, th) - radial_D(params, hz, hz.r0)
    d0 = float(radial_D(params, hz, hz.r0))
    min_coef = min(mu0, c_min, float(np.min(psi_coef)))
    return {
        "mu_r0": mu0,
        "c_min": c_min,
        "psi_coef_min": float(np.min(psi_coef)),
        "D_at_r0": d0,
        "min_coefficient": min_coef,
        "passed": bool(min_coef > 0),
    }


# -- S+ / S- -------------------------------------------------------------------


def s_pairing(profile: ExtensionProfile, r, theta, xi3):
    """rho^2 G*(dtau*, xi) for STARROT mode covectors ``(xi_r, xi_psi, xi_theta)``."""
    params, hz = profile.params, profile.horizons
    xi3 = np.asarray(xi3, float)
    a, b = params.spin, params.b
    den = hz.r0**2 + a * a
    w = (hz.r0**2 - r * r) / den
    v = (hz.r0**2 + a * a * np.cos(theta) ** 2) / den
    ra = r * r + a * a
    g_tr = -b * profile.f(r) * ra
    g_tpsi = b * b * a * v / params.c(theta) - b * b * profile.X(r) * ra * a * w
    return g_tr * xi3[..., 0] + g_tpsi * xi3[..., 1]


def classify_s_pm(profile: ExtensionProfile, r: float, theta: float, xi3,
                  tol: Tolerances = DEFAULT) -> str:
    """Return ``"plus"`` or ``"minus"`` for a characteristic STARROT mode covector."""
    xi3 = np.asarray(xi3, float)
    n2 = float(xi3 @ xi3)
    q = float(mode_symbol_q(profile, r, theta, xi3, "STARROT"))
    if abs(q) > tol.char_tol * max(n2, np.finfo(float).tiny):
        raise NotCharacteristic(f"|q| = {abs(q):.3g} exceeds {tol.char_tol:g} |xi|^2")
    pair = float(s_pairing(profile, r, theta, xi3))
    if abs(pair) <= tol.char_tol * math.sqrt(n2):
        raise DegenerateClassification(f"G*(dtau*, xi) = {pair:.3g} is within tolerance of zero")
    return "plus" if pair > 0 else "minus"
