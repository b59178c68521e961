"""Spacetime parameters, the radial quartic mu and its roots, and the h-negativity machinery.

All radii are in the same length unit as the mass; the cosmological constant
carries units of 1/length^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .config import DEFAULT, Tolerances
from .errors import DomainError, EmptyInterval, NotSubextremal, RootIsolationFailure

__all__ = [
    "SpacetimeParams",
    "HorizonData",
    "LambdaInterval",
    "mu",
    "mu_derivatives",
    "mu_coefficients",
    "discriminant_value",
    "discriminant_terms",
    "is_subextremal",
    "horizon_data",
    "lambda_interval",
    "maximal_ratio_margin",
    "h_eval",
    "h_coefficients",
    "h_scale",
    "verify_h_negative",
    "extremal_boundary_check",
    "sample_subextremal",
]

H_FORMS = ("defining", "squared", "quartic", "centered")


@dataclass(frozen=True)
class SpacetimeParams:
    """The triple (Lambda, m, a).

    ``lam`` is the cosmological constant, ``mass`` the black hole mass and
    ``spin`` the rotation parameter a (signed).
    """

    lam: float
    mass: float
    spin: float

    def __post_init__(self):
        for name in ("lam", "mass", "spin"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
        if self.lam <= 0:
            raise DomainError(f"lambda must be positive, got {self.lam!r}")
        if self.mass <= 0:
            raise DomainError(f"mass must be positive, got {self.mass!r}")

    @property
    def gamma(self) -> float:
        return self.lam * self.spin**2 / 3.0

    @property
    def b(self) -> float:
        return 1.0 + self.gamma

    def c(self, theta):
        return 1.0 + self.gamma * np.cos(theta) ** 2

    def dc(self, theta):
        return -2.0 * self.gamma * np.cos(theta) * np.sin(theta)

    def rho2(self, r, theta):
        return r**2 + self.spin**2 * np.cos(theta) ** 2

    @property
    def is_subextremal(self) -> bool:
        return is_subextremal(self)

    def validated(self) -> "SpacetimeParams":
        """Return ``self`` if subextremal, else raise `NotSubextremal`."""
        if not is_subextremal(self):
            raise NotSubextremal(
                f"parameters {self} are not subextremal "
                f"(discriminant {discriminant_value(self):.6g}, 1 - gamma = {1 - self.gamma:.6g})"
            )
        return self

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "mass": self.mass, "spin": self.spin}

    @classmethod
    def from_dict(cls, d) -> "SpacetimeParams":
        return cls(float(d["lambda"]), float(d["mass"]), float(d["spin"]))


def mu_coefficients(params: SpacetimeParams) -> np.ndarray:
    """Power-basis coefficients of mu, highest degree first."""
    a2 = params.spin**2
    return np.array([-params.lam / 3.0, 0.0, 1.0 - params.gamma, -2.0 * params.mass, a2])


def mu(params: SpacetimeParams, r):
    a2 = params.spin**2
    return (r**2 + a2) * (1.0 - params.lam * r**2 / 3.0) - 2.0 * params.mass * r


def mu_derivatives(params: SpacetimeParams, r, order: int = 0):
    """mu and its first three r-derivatives, evaluated exactly."""
    lam, m, g = params.lam, params.mass, params.gamma
    if order == 0:
        return mu(params, r)
    if order == 1:
        return -4.0 * lam * r**3 / 3.0 + 2.0 * (1.0 - g) * r - 2.0 * m
    if order == 2:
        return -4.0 * lam * r**2 + 2.0 * (1.0 - g)
    if order == 3:
        return -8.0 * lam * r
    if order >= 4:
        if order == 4:
            return -8.0 * lam + 0.0 * r
        return 0.0 * r
    raise ValueError(f"order must be non-negative, got {order}")


def discriminant_terms(params: SpacetimeParams) -> tuple[float, float, float, float]:
    lam, m, a = params.lam, params.mass, params.spin
    g = params.gamma
    return (
        -((1.0 + g) ** 4) * (a / m) ** 2,
        12.0 * (1.0 - g) * lam * a**2,
        (1.0 - g) ** 3,
        -9.0 * lam * m**2,
    )


def discriminant_value(params: SpacetimeParams) -> float:
    return math.fsum(discriminant_terms(params))


def is_subextremal(params: SpacetimeParams) -> bool:
    return discriminant_value(params) > 0.0 and 1.0 - params.gamma > 0.0


@dataclass(frozen=True)
class HorizonData:
    r_minus: float
    r_C: float
    r_e: float
    r_c: float
    r0: float
    beta_e: float
    beta_c: float

    @property
    def beta(self) -> float:
        return max(self.beta_e, self.beta_c)

    @property
    def roots(self) -> tuple[float, float, float, float]:
        return (self.r_minus, self.r_C, self.r_e, self.r_c)

    @property
    def width(self) -> float:
        return self.r_c - self.r_e

    def as_dict(self) -> dict:
        return {
            "r_minus": self.r_minus,
            "r_C": self.r_C,
            "r_e": self.r_e,
            "r_c": self.r_c,
            "r0": self.r0,
            "beta_e": self.beta_e,
            "beta_c": self.beta_c,
            "beta": self.beta,
        }


def _bisect(fn, lo, hi, rel_tol, max_iter=400):
    flo = fn(lo)
    if flo == 0.0:
        return lo
    fhi = fn(hi)
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise RootIsolationFailure(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= rel_tol * max(abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def _newton_polish(fn, dfn, x):
    d = dfn(x)
    if d == 0.0 or not math.isfinite(d):
        return x
    x1 = x - fn(x) / d
    return x1 if abs(fn(x1)) <= abs(fn(x)) else x


def _geometric_grid(R: float, n: int) -> np.ndarray:
    pos = R * np.logspace(-14.0, 0.0, n)
    return np.concatenate([-pos[::-1], [0.0], pos])


def _isolate_roots(fn, R: float, n: int, expected: int) -> list[tuple[float, float]]:
    """Brackets (or exact hits, as degenerate brackets) of sign changes of fn on (-R, R)."""
    nodes = _geometric_grid(R, n)
    vals = fn(nodes)
    brackets = []
    for i, v in enumerate(vals):
        if v == 0.0:
            brackets.append((nodes[i], nodes[i]))
        elif i + 1 < len(vals) and v * vals[i + 1] < 0.0:
            brackets.append((nodes[i], nodes[i + 1]))
    return brackets


def horizon_data(params: SpacetimeParams, tol: Tolerances = DEFAULT) -> HorizonData:
    """Four real roots of mu, the critical radius r0 and the surface-gravity weights."""
    params.validated()
    f = lambda r: mu(params, r)  # noqa: E731
    df = lambda r: mu_derivatives(params, r, 1)  # noqa: E731
    R = 2.0 * math.sqrt(3.0 / params.lam)
    brackets = []
    n = 400
    for _ in range(6):
        brackets = _isolate_roots(f, R, n, 4)
        if len(brackets) == 4:
            break
        n *= 2
    if len(brackets) != 4:
        raise RootIsolationFailure(
            f"found {len(brackets)} sign changes of mu instead of 4 for {params}"
        )
    roots = []
    for lo, hi in brackets:
        r = lo if lo == hi else _bisect(f, lo, hi, tol.root_tol)
        roots.append(_newton_polish(f, df, r))
    roots.sort()
    r_minus, r_C, r_e, r_c = roots
    if not (r_minus < r_C < r_e < r_c):
        raise RootIsolationFailure(f"roots not strictly ordered: {roots}")

    ddf = lambda r: mu_derivatives(params, r, 2)  # noqa: E731
    r0 = _bisect(df, r_e, r_c, tol.root_tol)
    r0 = _newton_polish(df, ddf, r0)

    b, a2 = params.b, params.spin**2
    beta_e = 2.0 * b * (r_e**2 + a2) / df(r_e)
    beta_c = -2.0 * b * (r_c**2 + a2) / df(r_c)
    return HorizonData(r_minus, r_C, r_e, r_c, r0, beta_e, beta_c)


def root_residual_scale(params: SpacetimeParams, r: float) -> float:
    return max(1.0, r**4 * params.lam)


@dataclass(frozen=True)
class LambdaInterval:
    lambda0: float
    lambda1: float
    empty: bool = False

    def contains(self, lam: float) -> bool:
        return (not self.empty) and self.lambda0 < lam < self.lambda1

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lambda0 + self.lambda1)

    def as_dict(self) -> dict:
        return {"lambda0": self.lambda0, "lambda1": self.lambda1, "empty": self.empty}


def _disc_lam(lam: float, a: float, m: float) -> float:
    if lam == 0.0:
        return 1.0 - (a / m) ** 2
    return discriminant_value(SpacetimeParams(lam, m, a))


def discriminant_scale(lam: float, a: float, m: float) -> float:
    if lam == 0.0:
        return max(1.0, (a / m) ** 2)
    return max(1.0, math.fsum(abs(t) for t in discriminant_terms(SpacetimeParams(lam, m, a))))


def lambda_interval(a: float, m: float, n_scan: int = 512) -> LambdaInterval:
    """The open interval of Lambda for which (Lambda, m, a) is subextremal.

    Located by a log-spaced scan of the discriminant over (0, min(3/a^2, 10/(9 m^2))),
    followed by bisection of each sign change. A bounded maximisation is used
    as a fallback when the scan sees no positive node, so narrow intervals near
    the maximal spin ratio are not missed.
    """
    if m <= 0:
        raise DomainError(f"mass must be positive, got {m!r}")
    a = abs(a)
    # discriminant > 0 forces 9 Lambda m^2 < (1-g)^3 + 36 g (1-g) <= 10
    hi = 10.0 / (9.0 * m * m)
    if a * a * hi > 3.0:
        hi = 3.0 / (a * a)
    nodes = np.logspace(math.log10(hi) - 10.0, math.log10(hi * (1.0 - 1e-12)), n_scan)
    nodes = np.concatenate([[0.0], nodes])
    vals = np.array([_disc_lam(x, a, m) for x in nodes])

    fn = lambda x: _disc_lam(x, a, m)  # noqa: E731
    if not (vals > 0).any():
        k = int(np.argmax(vals))
        lo_b = nodes[max(k - 1, 0)]
        hi_b = nodes[min(k + 1, len(nodes) - 1)]
        res = minimize_scalar(lambda x: -fn(x), bounds=(lo_b, hi_b), method="bounded",
                              options={"xatol": 1e-15 * hi})
        if -res.fun <= 0.0:
            return LambdaInterval(float("nan"), float("nan"), empty=True)
        nodes = np.sort(np.concatenate([nodes, [res.x]]))
        vals = np.array([fn(x) for x in nodes])

    pos = np.flatnonzero(vals > 0)
    first, last = pos[0], pos[-1]
    if first == 0:
        lam0 = 0.0
    else:
        lam0 = _bisect(fn, nodes[first - 1], nodes[first], 1e-16)
    if last == len(nodes) - 1:
        lam1 = nodes[last]
    else:
        lam1 = _bisect(fn, nodes[last], nodes[last + 1], 1e-16)
    return LambdaInterval(float(lam0), float(lam1))


def maximal_ratio_margin(params: SpacetimeParams) -> float:
    """(9/8)/(1 - Lambda a^2/3) - a^2/m^2."""
    one_minus = 1.0 - params.gamma
    if one_minus <= 0:
        raise DomainError("1 - Lambda a^2/3 must be positive")
    return 9.0 / 8.0 / one_minus - (params.spin / params.mass) ** 2


# -- h ----------------------------------------------------------------------


def h_coefficients(params: SpacetimeParams) -> np.ndarray:
    """Power-basis coefficients of the quartic h, highest degree first."""
    lam, m, a2, g = params.lam, params.mass, params.spin**2, params.gamma
    b = params.b
    return np.array([4 * lam * m, -4 * b * b, 12 * m * (1 - g), -12 * m * m, 4 * m * a2])


def h_eval(params: SpacetimeParams, r, form: str = "quartic"):
    """Evaluate h in one of its four equivalent algebraic forms.

    ``squared`` and ``centered`` carry explicit 1/r factors and are undefined at r = 0.
    """
    lam, m, a2, g = params.lam, params.mass, params.spin**2, params.gamma
    r = np.asarray(r, dtype=float)
    if form == "quartic":
        return np.polyval(h_coefficients(params), r)
    if form == "defining":
        mu0 = mu(params, r)
        mu1 = mu_derivatives(params, r, 1)
        mu2 = mu_derivatives(params, r, 2)
        k = r * mu1 - 4 * mu0
        dk = r * mu2 - 3 * mu1
        return 2 * mu0 * dk - mu1 * k
    if np.any(r == 0):
        raise DomainError(f"form {form!r} is undefined at r = 0")
    if form == "squared":
        mu0 = mu(params, r)
        k = r * mu_derivatives(params, r, 1) - 4 * mu0
        return -(k**2) / r - 4 * mu0 * (3 * m - 4 * a2 / r)
    if form == "centered":
        one = 1 - g
        return (
            4 * lam * r**4 / 3 * (3 * m - 4 * a2 / r)
            - 4 * one**2 * (r - m / one) ** 3
            + 4 * m**3 * (a2 / m**2 - 1 / one)
        )
    raise ValueError(f"unknown form {form!r}; expected one of {H_FORMS}")


def h_scale(params: SpacetimeParams, r):
    """Largest intermediate term magnitude over all four forms of h at r.

    Used as the denominator of relative form-agreement errors, so that
    cancellation inherent to a form is not counted as disagreement.
    """
    lam, m, a2, g = params.lam, params.mass, params.spin**2, params.gamma
    r = np.asarray(r, dtype=float)
    mu0 = mu(params, r)
    mu1 = mu_derivatives(params, r, 1)
    mu2 = mu_derivatives(params, r, 2)
    k = r * mu1 - 4 * mu0
    dk = r * mu2 - 3 * mu1
    c = h_coefficients(params)
    terms = [np.abs(c[i]) * np.abs(r) ** (4 - i) for i in range(5)]
    terms += [np.abs(2 * mu0 * dk), np.abs(mu1 * k)]
    with np.errstate(divide="ignore"):
        terms += [k**2 / np.abs(r), np.abs(12 * m * mu0), np.abs(16 * a2 * mu0 / r)]
        one = 1 - g
        terms += [
            np.abs(4 * lam * m * r**4),
            np.abs(16 * lam * a2 * r**3 / 3),
            np.abs(4 * one**2 * (r - m / one) ** 3),
            np.abs(4 * m * a2) + np.abs(4 * m**3 / one),
        ]
    return np.max(np.stack(np.broadcast_arrays(*terms)), axis=0)


def h_derivative_at(params: SpacetimeParams, r: float, k: int) -> tuple[float, float]:
    """k-th derivative of h at r and the magnitude scale of its monomials."""
    p = np.poly1d(h_coefficients(params)).deriv(k) if k else np.poly1d(h_coefficients(params))
    coeffs = np.abs(p.coeffs)
    deg = len(coeffs) - 1
    scale = float(sum(cf * abs(r) ** (deg - i) for i, cf in enumerate(coeffs)))
    return float(p(r)), max(scale, np.finfo(float).tiny)


@dataclass(frozen=True)
class HNegativityReport:
    max_h: float
    argmax_r: float
    h_at_re: float
    h_at_rc: float
    n_grid: int
    passed: bool

    def as_dict(self) -> dict:
        return {
            "max_h": self.max_h,
            "argmax_r": self.argmax_r,
            "h_at_re": self.h_at_re,
            "h_at_rc": self.h_at_rc,
            "n_grid": self.n_grid,
            "passed": self.passed,
        }


def verify_h_negative(params: SpacetimeParams, n_grid: int = DEFAULT.grid,
                      horizons: HorizonData | None = None) -> HNegativityReport:
    hz = horizons or horizon_data(params)
    eps = 4 * np.finfo(float).eps
    lo = hz.r_e + eps * abs(hz.r_e)
    hi = hz.r_c - eps * abs(hz.r_c)
    r = np.linspace(lo, hi, n_grid)
    h = h_eval(params, r, "quartic")
    i = int(np.argmax(h))
    he = float(h_eval(params, hz.r_e))
    hc = float(h_eval(params, hz.r_c))
    return HNegativityReport(float(h[i]), float(r[i]), he, hc, n_grid, bool(h[i] < 0))


@dataclass(frozen=True)
class ExtremalReport:
    a: float
    m: float
    lambda0: float
    gamma: float
    alpha: float
    applicable: bool
    r_e: float
    h: tuple = field(default=())
    h_scale: tuple = field(default=())
    hppp_bound: float = float("nan")
    hppp_bound_literal: float = float("nan")
    slack: float = float("nan")
    slack_identity: float = float("nan")
    vanish_ok: bool = False
    bound_ok: bool = False
    literal_bound_ok: bool = False
    identity_ok: bool = False

    @property
    def passed(self) -> bool:
        return self.identity_ok and (not self.applicable or (self.vanish_ok and self.bound_ok))

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["h"] = list(self.h)
        d["h_scale"] = list(self.h_scale)
        d["passed"] = self.passed
        return d


def extremal_boundary_check(a: float, m: float, vanish_tol: float = 1e-8,
                            identity_tol: float = 1e-10) -> ExtremalReport:
    """Check the extremal-limit structure of h at Lambda = Lambda_0.

    At Lambda_0 > 0 the inner horizons merge (r_C = r_e) and r_e is the smaller
    root of (1 - gamma) r^2 - 3 m r + 2 a^2. There h, h', h'' vanish and h''' obeys
    the bound ``-96 Lambda_0 m r_e sqrt(1 - 8/(9 alpha))``; the gap between
    the bound and h'''(r_e), divided by 24, equals (1 + gamma)^2 - 16 gamma.

    When Lambda_0 = 0 (|a| < m) no inner double root exists; the vanishing checks are
    then marked not applicable and only the algebraic slack identity is tested.
    """
    iv = lambda_interval(a, m)
    if iv.empty:
        raise EmptyInterval(f"no admissible Lambda for a={a!r}, m={m!r}")
    lam0 = iv.lambda0
    a2 = a * a
    g = lam0 * a2 / 3.0
    alpha = math.inf if a == 0 else m * m / (a2 * (1.0 - g))
    s = math.sqrt(max(0.0, 1.0 - 8.0 / (9.0 * alpha)))
    r_e = 3.0 * m * (1.0 - s) / (2.0 * (1.0 - g))
    slack_identity = (1.0 + g) ** 2 - 16.0 * g
    applicable = lam0 > 0.0

    if lam0 > 0.0:
        params = SpacetimeParams(lam0, m, a)
        hs = [h_derivative_at(params, r_e, k) for k in range(4)]
        h3 = hs[3][0]
    else:
        hs = []
        # Lambda = 0: h''' = -24 (1 + gamma)^2 exactly, with gamma = 0
        h3 = -24.0
    bound = -96.0 * lam0 * m * r_e * s
    bound_literal = -96.0 * lam0 * r_e * s
    slack = (bound - h3) / 24.0
    vals = tuple(v for v, _ in hs)
    scales = tuple(sc for _, sc in hs)
    vanish_ok = applicable and all(abs(v) <= vanish_tol * sc for v, sc in hs[:3])
    bound_ok = (not applicable) or h3 <= bound + vanish_tol * hs[3][1]
    # the same bound without the mass factor; not scale invariant, reported separately
    literal_bound_ok = (not applicable) or h3 <= bound_literal + vanish_tol * hs[3][1]
    identity_ok = abs(slack - slack_identity) <= identity_tol * max(1.0, abs(slack_identity)) \
        and slack_identity >= -identity_tol
    return ExtremalReport(
        a=a, m=m, lambda0=lam0, gamma=g, alpha=alpha, applicable=applicable, r_e=r_e,
        h=vals, h_scale=scales, hppp_bound=bound, hppp_bound_literal=bound_literal,
        slack=slack, slack_identity=slack_identity, vanish_ok=vanish_ok,
        bound_ok=bound_ok, literal_bound_ok=literal_bound_ok, identity_ok=identity_ok,
    )


# -- sampling ---------------------------------------------------------------

MAX_SPIN_RATIO = 1.1


def sample_subextremal(rng: np.random.Generator, n: int, spin_ratio=(0.0, MAX_SPIN_RATIO),
                       mass=(0.5, 2.0), signed: bool = True, margin: float = 1e-3):
    """Draw n subextremal triples: m and |a|/m uniform, Lambda uniform inside its interval.

    ``margin`` trims that fraction of the interval width from both ends.
    """
    out = []
    while len(out) < n:
        m = rng.uniform(*mass)
        ratio = rng.uniform(*spin_ratio)
        a = ratio * m
        if signed and rng.random() < 0.5:
            a = -a
        iv = lambda_interval(a, m)
        if iv.empty:
            continue
        w = iv.lambda1 - iv.lambda0
        lam = rng.uniform(iv.lambda0 + margin * w, iv.lambda1 - margin * w)
        if lam <= 0:
            continue
        p = SpacetimeParams(lam, m, a)
        if is_subextremal(p):
            out.append(p)
    return out
