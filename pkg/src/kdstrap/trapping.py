"""The trapped set: F(r), the trapped radius, normal hyperbolicity, and the stable/unstable branches.

Fibers of the trapped set are labelled by the conserved Boyer-Lindquist
components ``(xi_t, xi_phi)``. With ``P(r) = (r^2 + a^2) xi_t + a xi_phi`` we have
``F = P^2 / mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from .config import DEFAULT, Tolerances
from .errors import DomainError
from .radial import (HorizonData, SpacetimeParams, _bisect, horizon_data, mu,
                     mu_coefficients, mu_derivatives)

__all__ = [
    "TrappedOrbit",
    "P_eval",
    "F_eval",
    "trap_aux",
    "trapped_radius",
    "linearization",
    "manifold_xi_r",
    "F_minus_Ftrap",
    "gamma_rank_check",
    "on_gamma",
]

INTERIOR, ZERO_XI_T, ENDPOINT = "Interior", "ZeroXiT", "EndpointDegenerate"


def P_eval(params: SpacetimeParams, xi_t, xi_phi, r, order: int = 0):
    a = params.spin
    if order == 0:
        return (r * r + a * a) * xi_t + a * xi_phi
    if order == 1:
        return 2.0 * r * xi_t
    if order == 2:
        return 2.0 * xi_t + 0.0 * r
    return 0.0 * r


def F_eval(params: SpacetimeParams, xi_t, xi_phi, r, order: int = 0):
    """F = P^2/mu and its first two r-derivatives."""
    m0 = mu(params, r)
    if np.any(m0 == 0):
        raise DomainError("F is undefined at a root of mu")
    P = P_eval(params, xi_t, xi_phi, r)
    if order == 0:
        return P * P / m0
    m1 = mu_derivatives(params, r, 1)
    P1 = P_eval(params, xi_t, xi_phi, r, 1)
    if order == 1:
        return -P * trap_aux(params, xi_t, xi_phi, r) / (m0 * m0)
    if order == 2:
        m2 = mu_derivatives(params, r, 2)
        P2 = P_eval(params, xi_t, xi_phi, r, 2)
        return ((2.0 * P1 * P1 + 2.0 * P * P2) / m0 - 4.0 * P * P1 * m1 / m0**2
                - P * P * m2 / m0**2 + 2.0 * P * P * m1 * m1 / m0**3)
    raise ValueError("order must be 0, 1 or 2")


def trap_aux(params: SpacetimeParams, xi_t, xi_phi, r):
    """P mu' - 4 r xi_t mu; its zeros are the critical points of F away from P = 0."""
    return (P_eval(params, xi_t, xi_phi, r) * mu_derivatives(params, r, 1)
            - 4.0 * r * xi_t * mu(params, r))


def trap_aux_poly(params: SpacetimeParams, xi_t, xi_phi) -> Polynomial:
    a = params.spin
    mu_p = Polynomial(mu_coefficients(params)[::-1])
    P = Polynomial([a * a * xi_t + a * xi_phi, 0.0, xi_t])
    return P * mu_p.deriv() - Polynomial([0.0, 4.0 * xi_t]) * mu_p


@dataclass(frozen=True)
class TrappedOrbit:
    params: SpacetimeParams
    horizons: HorizonData
    xi_t: float
    xi_phi: float
    case: str
    r_trap: float
    F_trap: float
    F_pp: float

    def rho2(self, theta) -> float:
        return self.r_trap**2 + self.params.spin**2 * np.cos(theta) ** 2

    def rate_q(self) -> float:
        """Normal expansion rate for the flow of q = rho^2 p: sqrt(2 mu b^2 F'')."""
        p = self.params
        return math.sqrt(2.0 * mu(p, self.r_trap) * p.b**2 * self.F_pp)

    def normal_rate(self, theta) -> float:
        """Normal expansion rate for the flow of p at polar angle theta."""
        return self.rate_q() / self.rho2(theta)

    def as_dict(self) -> dict:
        return {
            "xi_t": self.xi_t,
            "xi_phi": self.xi_phi,
            "case": self.case,
            "r_trap": self.r_trap,
            "F_trap": self.F_trap,
            "F_pp": self.F_pp,
            "rate_equator": self.normal_rate(math.pi / 2) if self.case != ENDPOINT else float("nan"),
        }


def _endpoint_zero(params, hz, xi_t, xi_phi, tol) -> bool:
    if xi_t == 0:
        return False
    a = params.spin
    rz2 = -a * xi_phi / xi_t - a * a
    if rz2 < 0:
        return False
    rz = math.sqrt(rz2)
    return any(abs(rz - rh) <= 1e3 * tol.root_tol * rh for rh in (hz.r_e, hz.r_c))


def trapped_radius(params: SpacetimeParams, xi_t: float, xi_phi: float,
                   horizons: HorizonData | None = None, tol: Tolerances = DEFAULT) -> TrappedOrbit:
    """Locate the unique critical point of F on (r_e, r_c)."""
    if xi_t == 0 and xi_phi == 0:
        raise DomainError("(xi_t, xi_phi) must not both vanish")
    hz = horizons or horizon_data(params)
    xi_t, xi_phi = float(xi_t), float(xi_phi)
    if xi_t == 0.0:
        r_t = hz.r0
        case = ZERO_XI_T
    elif _endpoint_zero(params, hz, xi_t, xi_phi, tol):
        return TrappedOrbit(params, hz, xi_t, xi_phi, ENDPOINT, float("nan"), float("nan"), float("nan"))
    else:
        case = INTERIOR
        a = params.spin
        rz2 = -a * xi_phi / xi_t - a * a
        rz = math.sqrt(rz2) if rz2 > 0 else -1.0
        if hz.r_e < rz < hz.r_c:
            # P vanishes inside: F has its only critical point, a zero minimum, there
            r_t = rz
        else:
            fn = lambda r: trap_aux(params, xi_t, xi_phi, r)  # noqa: E731
            r_t = _bisect(fn, hz.r_e, hz.r_c, tol.root_tol)
            poly = trap_aux_poly(params, xi_t, xi_phi)
            d = poly.deriv()(r_t)
            if d != 0:
                r1 = r_t - poly(r_t) / d
                if hz.r_e < r1 < hz.r_c and abs(fn(r1)) <= abs(fn(r_t)):
                    r_t = r1
    F_t = float(F_eval(params, xi_t, xi_phi, r_t))
    F_pp = float(F_eval(params, xi_t, xi_phi, r_t, 2))
    return TrappedOrbit(params, hz, xi_t, xi_phi, case, float(r_t), F_t, F_pp)


def F_prime_scale(params, xi_t, xi_phi, r):
    P = P_eval(params, xi_t, xi_phi, r)
    m0 = mu(params, r)
    return abs(P) * (abs(P * mu_derivatives(params, r, 1)) + abs(4 * r * xi_t * m0)) / m0**2


def linearization(orbit: TrappedOrbit, theta: float) -> dict:
    """Linearised (r, xi_r) flow of p = q/rho^2 at the trapped set."""
    if orbit.case == ENDPOINT:
        raise DomainError("no trapped radius for endpoint-degenerate data")
    p = orbit.params
    rho2 = orbit.rho2(theta)
    m0 = float(mu(p, orbit.r_trap))
    A = np.array([[0.0, 2.0 * m0], [p.b**2 * orbit.F_pp, 0.0]]) / rho2
    rate = orbit.normal_rate(theta)
    return {
        "matrix": A,
        "trace": float(np.trace(A)),
        "det": float(np.linalg.det(A)),
        "eigenvalues": np.sort(np.linalg.eigvals(A).real),
        "rate": rate,
    }


def F_minus_Ftrap(orbit: TrappedOrbit, r):
    """F(r) - F(r_trap) without cancellation, by integrating F' from r_trap.

    trap_aux is re-expanded about r_trap with its constant term dropped so
    that F' is accurate even for r very close to r_trap.
    """
    p = orbit.params
    poly = trap_aux_poly(p, orbit.xi_t, orbit.xi_phi)
    # coefficients in powers of (r - r_trap); r_trap is a root by definition
    taylor = [poly.deriv(k)(orbit.r_trap) / math.factorial(k) for k in range(poly.degree() + 1)]
    taylor[0] = 0.0
    tp = Polynomial(taylor)

    def fprime(s):
        P = P_eval(p, orbit.xi_t, orbit.xi_phi, s)
        return -P * tp(s - orbit.r_trap) / mu(p, s) ** 2

    def one(rv):
        if rv == orbit.r_trap:
            return 0.0
        val, _ = quad(fprime, orbit.r_trap, rv, epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    return np.vectorize(one, otypes=[float])(r)


def manifold_xi_r(orbit: TrappedOrbit, r, branch: str):
    """xi_r on the unstable (+) or stable (-) manifold over radius r."""
    if branch not in ("stable", "unstable"):
        raise ValueError("branch must be 'stable' or 'unstable'")
    p = orbit.params
    dF = F_minus_Ftrap(orbit, r)
    tol = 1e-12 * max(abs(orbit.F_trap), 1e-300)
    if np.any(dF < -tol):
        raise DomainError("F(r) < F_trap: r is not on a branch through the trapped set")
    sign = 1.0 if branch == "unstable" else -1.0
    return sign * np.sign(r - orbit.r_trap) * p.b * np.sqrt(np.maximum(dF, 0.0) / mu(p, r))


def wave_carter_theta(params: SpacetimeParams, xi_t, xi_phi, theta, xi_theta):
    """K = c xi_theta^2 + b^2 u^2/(c sin^2 theta) with u = a sin^2 xi_t + xi_phi."""
    s = np.sin(theta) ** 2
    c = params.c(theta)
    u = params.spin * s * xi_t + xi_phi
    return c * xi_theta**2 + params.b**2 * u * u / (c * s)


def on_gamma(orbit: TrappedOrbit, r, xi_r, tol: float = 1e-10) -> bool:
    scale = orbit.horizons.r_c - orbit.horizons.r_e
    return bool(abs(r - orbit.r_trap) <= tol * scale and abs(xi_r) <= tol * (1 + abs(orbit.xi_t) + abs(orbit.xi_phi)))


def gamma_rank_check(orbit: TrappedOrbit, theta_samples, tol: Tolerances = DEFAULT) -> dict:
    """Verify dq/dr = 0 and rank 3 of d(r - r_trap), d xi_r, dq on the trapped set.

    Phase coordinates are ``(r, theta, xi_r, xi_theta, xi_t, xi_phi)``; the
    gradient of r_trap in the fiber variables is taken by central differences.
    """
    p, hz = orbit.params, orbit.horizons
    b2 = p.b**2
    r_t = orbit.r_trap
    out_dq, out_sv, out_rank = [], [], []
    h = 1e-6 * (abs(orbit.xi_t) + abs(orbit.xi_phi))
    drt = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        rp = trapped_radius(p, orbit.xi_t + e[0], orbit.xi_phi + e[1], hz).r_trap
        rm = trapped_radius(p, orbit.xi_t - e[0], orbit.xi_phi - e[1], hz).r_trap
        drt.append((rp - rm) / (2 * h))
    for th in np.atleast_1d(theta_samples):
        K_ang = wave_carter_theta(p, orbit.xi_t, orbit.xi_phi, th, 0.0)
        xth2 = (b2 * orbit.F_trap - K_ang) / p.c(th)
        if xth2 < 0:
            continue
        xth = math.sqrt(xth2)
        # xi_r = 0 on the trapped set, so dq/dr reduces to -b^2 F'
        dq_dr = -b2 * F_eval(p, orbit.xi_t, orbit.xi_phi, r_t, 1)
        scale = b2 * F_prime_scale(p, orbit.xi_t, orbit.xi_phi, r_t)
        out_dq.append(abs(dq_dr) / scale)
        # gradients of q in (theta, xi_theta, xi_t, xi_phi) at xi_r = 0
        s = math.sin(th) ** 2
        c = p.c(th)
        u = p.spin * s * orbit.xi_t + orbit.xi_phi
        dq_dth = _dK_dtheta(p, orbit.xi_t, orbit.xi_phi, th, xth)
        dq_dxth = 2 * c * xth
        P = P_eval(p, orbit.xi_t, orbit.xi_phi, r_t)
        m0 = mu(p, r_t)
        dq_dxt = 2 * b2 * u * p.spin / c - 2 * b2 * P * (r_t**2 + p.spin**2) / m0
        dq_dxp = 2 * b2 * u / (c * s) - 2 * b2 * P * p.spin / m0
        J = np.array([
            [1.0, 0.0, 0.0, 0.0, -drt[0], -drt[1]],
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [dq_dr, dq_dth, 0.0, dq_dxth, dq_dxt, dq_dxp],
        ])
        sv = np.linalg.svd(J, compute_uv=False)
        rel = sv[-1] / sv[0]
        out_sv.append(rel)
        out_rank.append(int(np.sum(sv > 1e-8 * sv[0])))
    return {
        "n_points": len(out_sv),
        "max_rel_dq_dr": float(max(out_dq)) if out_dq else float("nan"),
        "min_rel_singular_value": float(min(out_sv)) if out_sv else float("nan"),
        "ranks": out_rank,
        "passed": bool(out_sv) and all(k == 3 for k in out_rank) and max(out_dq) <= 1e-10,
    }


def _dK_dtheta(params, xi_t, xi_phi, theta, xi_theta):
    a, b2 = params.spin, params.b**2
    sn, cs = math.sin(theta), math.cos(theta)
    s = sn * sn
    ds = 2 * sn * cs
    c = params.c(theta)
    dc = params.dc(theta)
    u = a * s * xi_t + xi_phi
    du = a * xi_t * ds
    den = c * s
    dden = dc * s + c * ds
    return dc * xi_theta**2 + b2 * (2 * u * du / den - u * u * dden / den**2)
