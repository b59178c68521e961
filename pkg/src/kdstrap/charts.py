"""Extension profile f, the slab margin delta, and the four coordinate charts.

Charts (coordinate order is always time, r, angle, theta):

* ``BL``      Boyer-Lindquist ``(t, r, phi, theta)``
* ``ROT``     co-rotating ``(tau, r, psi, theta)`` with ``psi = phi - k t``
* ``STAR``    horizon-regular ``(t*, r, phi*, theta)``
* ``STARROT`` horizon-regular and co-rotating ``(tau*, r, psi*, theta)``

where ``k = a / (r0^2 + a^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from .config import DEFAULT, Tolerances
from .errors import BandFitFailure, ChartDomainError, DomainError
from .radial import HorizonData, SpacetimeParams, horizon_data, mu, mu_derivatives

__all__ = [
    "CHARTS",
    "ExtensionProfile",
    "ChartPoint",
    "Covector",
    "build_extension",
    "default_delta",
    "band_functions",
    "band_margin",
    "chart_transform",
    "transform_covector",
    "spacelike_slice_check",
    "rotation_rate",
]

CHARTS = ("BL", "ROT", "STAR", "STARROT")
_ROTATING = {"ROT", "STARROT"}
_STARRED = {"STAR", "STARROT"}


def rotation_rate(params: SpacetimeParams, horizons: HorizonData) -> float:
    """k = a / (r0^2 + a^2), the angular speed of the co-rotating frame."""
    return params.spin / (horizons.r0**2 + params.spin**2)


@dataclass(frozen=True)
class ExtensionProfile:
    """f = f0 + mu f1 on the slab (r_e - delta, r_c + delta).

    f0 is affine with f0(r_e) = -1, f0(r_c) = 1, and f1 is a polynomial.
    """

    params: SpacetimeParams
    horizons: HorizonData
    delta: float
    f1: Polynomial
    base: str = "affine"
    margins: dict = field(default_factory=dict, compare=False)

    @property
    def degree(self) -> int:
        return self.f1.degree()

    @property
    def slab(self) -> tuple[float, float]:
        return self.horizons.r_e - self.delta, self.horizons.r_c + self.delta

    @property
    def k(self) -> float:
        return rotation_rate(self.params, self.horizons)

    # -- f and derivatives --------------------------------------------------

    def f0(self, r, order: int = 0):
        re, rc = self.horizons.r_e, self.horizons.r_c
        if order == 0:
            return (2.0 * r - re - rc) / (rc - re)
        if order == 1:
            return 2.0 / (rc - re) + 0.0 * r
        return 0.0 * r

    def f(self, r, order: int = 0):
        p = self.params
        if order == 0:
            return self.f0(r) + mu(p, r) * self.f1(r)
        if order == 1:
            return self.f0(r, 1) + mu_derivatives(p, r, 1) * self.f1(r) + mu(p, r) * self.f1.deriv()(r)
        if order == 2:
            f1, d1, d2 = self.f1(r), self.f1.deriv(1)(r), self.f1.deriv(2)(r)
            return (mu_derivatives(p, r, 2) * f1 + 2 * mu_derivatives(p, r, 1) * d1
                    + mu(p, r) * d2)
        raise ValueError("order must be 0, 1 or 2")

    # -- (1 - f^2)/mu with its removable singularities ----------------------

    def X0(self, r, order: int = 0):
        """(1 - f0^2)/mu written without the horizon factors."""
        hz, lam = self.horizons, self.params.lam
        w = hz.r_c - hz.r_e
        u, v = r - hz.r_minus, r - hz.r_C
        x0 = 12.0 / (lam * w * w * u * v)
        if order == 0:
            return x0
        if order == 1:
            return -x0 * (1.0 / u + 1.0 / v)
        raise ValueError("order must be 0 or 1")

    def X(self, r, order: int = 0):
        """(1 - f^2)/mu, finite at both horizons."""
        p = self.params
        f0, f1 = self.f0(r), self.f1(r)
        m0 = mu(p, r)
        if order == 0:
            return self.X0(r) - 2.0 * f0 * f1 - m0 * f1 * f1
        if order == 1:
            d1 = self.f1.deriv()(r)
            m1 = mu_derivatives(p, r, 1)
            return (self.X0(r, 1) - 2.0 * self.f0(r, 1) * f1 - 2.0 * f0 * d1
                    - m1 * f1 * f1 - 2.0 * m0 * f1 * d1)
        raise ValueError("order must be 0 or 1")

    def X_horizon_limit(self, r_h: float) -> float:
        """Limit of (1 - f^2)/mu at a simple root of mu, by l'Hopital."""
        return float(-2.0 * self.f(r_h) * self.f(r_h, 1) / mu_derivatives(self.params, r_h, 1))

    # -- coordinate change functions -----------------------------------------

    def Phi_prime(self, r):
        p = self.params
        return p.b * (r**2 + p.spin**2) * self.f(r) / mu(p, r)

    def Psi_prime(self, r):
        p = self.params
        return p.b * p.spin * self.f(r) / mu(p, r)

    def _integral(self, integrand, r: float) -> float:
        hz = self.horizons
        if not hz.r_e < r < hz.r_c:
            raise ChartDomainError(f"r={r!r} outside the exterior ({hz.r_e}, {hz.r_c})")
        val, _ = quad(integrand, hz.r0, r, epsabs=0.0, epsrel=1e-11, limit=400)
        return val

    def Phi(self, r: float) -> float:
        return self._integral(self.Phi_prime, r)

    def Psi(self, r: float) -> float:
        return self._integral(self.Psi_prime, r)

    def as_dict(self) -> dict:
        d = {
            "delta": self.delta,
            "base": self.base,
            "degree": self.degree,
            "f1_domain_lo": float(self.f1.domain[0]),
            "f1_domain_hi": float(self.f1.domain[1]),
        }
        for i, cf in enumerate(self.f1.coef):
            d[f"f1_coef_{i}"] = float(cf)
        d.update(self.margins)
        return d


# -- band construction -------------------------------------------------------


def _slab_grid(hz: HorizonData, delta: float, n: int) -> np.ndarray:
    lo, hi = hz.r_e - delta, hz.r_c + delta
    r = np.linspace(lo, hi, n)
    return np.unique(np.concatenate([r, [hz.r_e, hz.r_c]]))


def band_functions(params: SpacetimeParams, horizons: HorizonData, r):
    """Band limits f_-, f_+ for f1 at r, computed with the affine base f0.

    At the horizons the continuous extension is returned: the finite branch
    takes its closed-form limit and the other branch is infinite.
    """
    r = np.asarray(r, dtype=float)
    hz = horizons
    a2 = params.spin**2
    w = hz.r_c - hz.r_e
    f0 = (2.0 * r - hz.r_e - hz.r_c) / w
    m0 = mu(params, r)
    W = 1.0 - a2 * m0 / (r**2 + a2) ** 2
    sq = np.sqrt(np.maximum(W, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        fm = (-f0 - sq) / m0
        fp = (-f0 + sq) / m0
    df0 = 2.0 / w
    at_e = r == hz.r_e
    at_c = r == hz.r_c
    if np.any(at_e):
        lim = -df0 / mu_derivatives(params, hz.r_e, 1) + a2 / (2.0 * (hz.r_e**2 + a2) ** 2)
        fm = np.where(at_e, lim, fm)
        fp = np.where(at_e, np.inf, fp)
    if np.any(at_c):
        lim = -df0 / mu_derivatives(params, hz.r_c, 1) - a2 / (2.0 * (hz.r_c**2 + a2) ** 2)
        fp = np.where(at_c, lim, fp)
        fm = np.where(at_c, -np.inf, fm)
    return fm, fp


def band_margin(profile: ExtensionProfile, r):
    """(1 - f^2)/mu - a^2/(r^2 + a^2)^2.

    Positive exactly when constant-t* slices are spacelike at r for every
    theta; equals sign(mu)(W - f^2)/|mu| away from the horizons.
    """
    a2 = profile.params.spin**2
    return profile.X(r) - a2 / (r**2 + a2) ** 2


def _relative_margin(X0, f0, m0, a_term, kappa):
    g = X0 - a_term - 2.0 * f0 * kappa - m0 * kappa * kappa
    scale = np.abs(X0) + a_term + 2.0 * np.abs(f0 * kappa) + np.abs(m0) * kappa * kappa
    return g / scale


def _constant_search(params, hz, r, n_kappa=65):
    a2 = params.spin**2
    f0 = (2.0 * r - hz.r_e - hz.r_c) / (hz.r_c - hz.r_e)
    m0 = mu(params, r)
    X0 = 12.0 / (params.lam * (hz.r_c - hz.r_e) ** 2 * (r - hz.r_minus) * (r - hz.r_C))
    a_term = a2 / (r**2 + a2) ** 2
    inside = (r >= hz.r_e) & (r <= hz.r_c)
    fm, fp = band_functions(params, hz, r[inside])
    lo, hi = float(np.max(fm)), float(np.min(fp))
    best, best_m = 0.0, float(np.min(_relative_margin(X0, f0, m0, a_term, 0.0)))
    if not lo < hi:
        return best, best_m
    # coarse scan, then a fine scan around the best coarse node
    for _ in range(2):
        cands = np.linspace(lo, hi, n_kappa)[1:-1]
        for kappa in cands:
            m = float(np.min(_relative_margin(X0, f0, m0, a_term, kappa)))
            if m > best_m:
                best, best_m = kappa, m
        step = (hi - lo) / (n_kappa - 1)
        lo, hi = best - step, best + step
    return best, best_m


def _poly_search(params, hz, r, max_degree, eta=0.05):
    """Least-squares polynomial fit of f1 to a point inside the admissible band."""
    fm, fp = band_functions(params, hz, r)
    m0 = mu(params, r)
    inside = m0 > 0
    lo = np.where(inside, fm, np.where(r < hz.r_e, fm, -np.inf))
    hi = np.where(inside, fp, np.where(r > hz.r_c, fp, np.inf))
    width = hi - lo
    finite = np.isfinite(width)
    typical = np.median(width[finite & (width > 0)]) if np.any(finite & (width > 0)) else 1.0
    hi_c = np.where(np.isfinite(hi), hi, lo + typical)
    lo_c = np.where(np.isfinite(lo), lo, hi_c - typical)
    # band edges can be nan at grid points on a horizon; those are masked below
    with np.errstate(invalid="ignore"):
        target = lo_c + 0.5 * (hi_c - lo_c)
        target = np.clip(target, lo_c + eta * (hi_c - lo_c), hi_c - eta * (hi_c - lo_c))
    ok = np.isfinite(target)
    domain = [float(r[0]), float(r[-1])]
    for deg in range(1, max_degree + 1):
        poly = Polynomial.fit(r[ok], target[ok], deg, domain=domain)
        yield poly


def default_delta(horizons: HorizonData) -> float:
    return 0.25 * min(horizons.r_e - horizons.r_C, horizons.r_c - horizons.r_e)


def _verify(profile: ExtensionProfile, n: int, tol: Tolerances):
    hz = profile.horizons
    r = _slab_grid(hz, profile.delta, n)
    margin = band_margin(profile, r)
    lo, hi = profile.slab
    mu_lo, mu_hi = mu(profile.params, lo), mu(profile.params, hi)
    fe, fc = profile.f(hz.r_e), profile.f(hz.r_c)
    info = {
        "min_band_margin": float(np.min(margin)),
        "argmin_band_margin": float(r[int(np.argmin(margin))]),
        "mu_slab_lo": float(mu_lo),
        "mu_slab_hi": float(mu_hi),
        "f_at_r_e": float(fe),
        "f_at_r_c": float(fc),
    }
    ok = (info["min_band_margin"] > 0 and mu_lo < 0 and mu_hi < 0
          and abs(fe + 1) <= 1e-12 and abs(fc - 1) <= 1e-12)
    return ok, info


def build_extension(params: SpacetimeParams, horizons: HorizonData | None = None,
                    delta_request: float | None = None, max_degree: int = 16,
                    tol: Tolerances = DEFAULT) -> ExtensionProfile:
    """Construct an admissible extension profile.

    A constant f1 is tried first, then polynomials of increasing degree fitted
    to the band center. When neither works the slab margin is halved.
    """
    hz = horizons or horizon_data(params)
    delta = default_delta(hz) if delta_request is None else float(delta_request)
    if delta <= 0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    delta = min(delta, 0.999 * (hz.r_e - hz.r_C))
    n = tol.verify_grid
    for _ in range(20):
        r = _slab_grid(hz, delta, n)
        domain = [float(r[0]), float(r[-1])]
        kappa, _ = _constant_search(params, hz, r)
        candidates = [Polynomial([kappa], domain=domain)]
        for poly in _chain(candidates, _poly_search(params, hz, r, max_degree)):
            prof = ExtensionProfile(params, hz, delta, poly)
            ok, info = _verify(prof, n, tol)
            if ok:
                return ExtensionProfile(params, hz, delta, poly, margins=info)
        delta *= 0.5
    raise BandFitFailure(f"no admissible f1 up to degree {max_degree} for {params}")


def _chain(*its):
    for it in its:
        yield from it


# -- charts ------------------------------------------------------------------


@dataclass(frozen=True)
class ChartPoint:
    chart: str
    coords: tuple

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ValueError(f"unknown chart {self.chart!r}")
        object.__setattr__(self, "coords", tuple(float(x) for x in self.coords))

    @property
    def r(self) -> float:
        return self.coords[1]

    @property
    def theta(self) -> float:
        return self.coords[3]


@dataclass(frozen=True)
class Covector:
    chart: str
    comps: tuple

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ValueError(f"unknown chart {self.chart!r}")
        object.__setattr__(self, "comps", tuple(float(x) for x in self.comps))


def check_domain(chart: str, r: float, theta: float, horizons: HorizonData,
                 profile: ExtensionProfile | None = None, tol: Tolerances = DEFAULT):
    tm = tol.pole_margin
    if not tm < theta < math.pi - tm:
        raise ChartDomainError(f"theta={theta!r} within the pole margin {tm}")
    if chart in _STARRED:
        if profile is None:
            raise ChartDomainError(f"chart {chart} needs an extension profile")
        lo, hi = profile.slab
        if not lo < r < hi:
            raise ChartDomainError(f"r={r!r} outside the slab ({lo}, {hi})")
    elif not horizons.r_e < r < horizons.r_c:
        raise ChartDomainError(f"r={r!r} outside ({horizons.r_e}, {horizons.r_c})")


def _shifts(profile, r):
    """(Phi, Psi) at r; these are singular at the horizons."""
    return profile.Phi(r), profile.Psi(r)


def chart_transform(obj, to: str, params: SpacetimeParams, profile: ExtensionProfile | None = None,
                    horizons: HorizonData | None = None, point: ChartPoint | None = None):
    """Transform a ChartPoint or Covector into chart ``to``.

    Covectors need their base ``point`` (in the covector's chart). Transforms
    between a Boyer-Lindquist type chart and a starred chart need the profile
    and r strictly between the horizons.
    """
    if isinstance(obj, Covector):
        if point is None:
            raise ValueError("a base point is needed to transform a covector")
        return transform_covector(obj, point, to, params, profile, horizons)
    if to not in CHARTS:
        raise ValueError(f"unknown chart {to!r}")
    src = obj.chart
    if src == to:
        return obj
    hz = horizons or (profile.horizons if profile is not None else horizon_data(params))
    k = rotation_rate(params, hz)
    crossing = (src in _STARRED) != (to in _STARRED)
    if crossing and profile is None:
        raise ChartDomainError("an extension profile is needed to change between BL and star charts")
    if isinstance(obj, ChartPoint):
        return _transform_point(obj, to, k, profile, hz)
    raise TypeError(f"cannot transform {type(obj).__name__}")


def _transform_point(pt: ChartPoint, to, k, profile, hz):
    t, r, ang, th = pt.coords
    # undo rotation: (time, angle) -> non-rotating of the same family
    if pt.chart in _ROTATING:
        ang = ang + k * t
    if (pt.chart in _STARRED) != (to in _STARRED):
        if not hz.r_e < r < hz.r_c:
            raise ChartDomainError(f"r={r!r} is not between the horizons")
        Phi, Psi = _shifts(profile, r)
        if pt.chart in _STARRED:
            t, ang = t + Phi, ang + Psi
        else:
            t, ang = t - Phi, ang - Psi
    if to in _ROTATING:
        ang = ang - k * t
    return ChartPoint(to, (t, r, ang, th))


def transform_covector(cv: Covector, point: ChartPoint, to: str, params: SpacetimeParams,
                       profile: ExtensionProfile | None = None,
                       horizons: HorizonData | None = None) -> Covector:
    """Transform a covector based at ``point`` (given in the covector's chart)."""
    if to not in CHARTS:
        raise ValueError(f"unknown chart {to!r}")
    if point.chart != cv.chart:
        raise ValueError("point and covector must be given in the same chart")
    src = cv.chart
    if src == to:
        return cv
    hz = horizons or (profile.horizons if profile is not None else horizon_data(params))
    k = rotation_rate(params, hz)
    xT, xr, xA, xth = cv.comps
    r = point.r
    # rotating -> non-rotating: xi_t = xi_tau - k xi_psi
    if src in _ROTATING:
        xT = xT - k * xA
    if (src in _STARRED) != (to in _STARRED):
        if profile is None:
            raise ChartDomainError("an extension profile is needed to change between BL and star charts")
        if not hz.r_e < r < hz.r_c:
            raise ChartDomainError(f"r={r!r} is not between the horizons")
        shift = profile.Phi_prime(r) * xT + profile.Psi_prime(r) * xA
        xr = xr - shift if src in _STARRED else xr + shift
    if to in _ROTATING:
        xT = xT + k * xA
    return Covector(to, (xT, xr, xA, xth))


# -- spacelike slices ----------------------------------------------------------


def spacelike_slice_check(profile: ExtensionProfile, n_grid: int = DEFAULT.verify_grid,
                          n_theta: int = 33, tol: Tolerances = DEFAULT) -> dict:
    """Check G*(dt*, dt*) < 0 on an (r, theta) grid and mu < 0 at the slab ends.

    Returns a report with the worst (largest) value of rho^2 G*(dt*, dt*) and
    its location.
    """
    p, hz = profile.params, profile.horizons
    r = _slab_grid(hz, profile.delta, n_grid)
    tm = tol.pole_margin
    th = np.linspace(tm, math.pi - tm, n_theta)
    R, TH = np.meshgrid(r, th, indexing="ij")
    s2 = np.sin(TH) ** 2
    a2 = p.spin**2
    gtt = p.b**2 * (a2 * s2 / p.c(TH) - (R**2 + a2) ** 2 * profile.X(R))
    i = np.unravel_index(int(np.argmax(gtt)), gtt.shape)
    lo, hi = profile.slab
    mu_lo, mu_hi = float(mu(p, lo)), float(mu(p, hi))
    worst = float(gtt[i])
    return {
        "worst_rho2_Gtt": worst,
        "worst_r": float(R[i]),
        "worst_theta": float(TH[i]),
        "mu_slab_lo": mu_lo,
        "mu_slab_hi": mu_hi,
        "passed": bool(worst < 0 and mu_lo < 0 and mu_hi < 0),
    }
