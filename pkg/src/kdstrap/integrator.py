"""Batched adaptive Dormand-Prince 5(4) integration of autonomous systems.

Each row of the batch carries its own step size and direction, so many
bicharacteristics can be advanced in one vectorised sweep. The Butcher
tableau and dense-output matrix are those of :class:`scipy.integrate.RK45`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

__all__ = ["BatchResult", "integrate_batch", "SPAN", "EVENT", "STEP_FAILURE", "MAX_STEPS"]

SPAN, EVENT, STEP_FAILURE, MAX_STEPS = 0, 1, -1, -2

_A = np.asarray(RK45.A, float)
_B = np.asarray(RK45.B, float)
_E = np.asarray(RK45.E, float)
_P = np.asarray(RK45.P, float)
_N_STAGES = RK45.n_stages
_SAFETY = 0.9
_MIN_FACTOR, _MAX_FACTOR = 0.2, 10.0
_ALPHA, _BETA = 0.7 / 5.0, 0.4 / 5.0


@dataclass
class BatchResult:
    """Outcome of :func:`integrate_batch`.

    ``status`` per row is one of SPAN, EVENT, STEP_FAILURE, MAX_STEPS.
    ``event_index`` is -1 when no terminal event fired.
    """

    s: np.ndarray
    y: np.ndarray
    status: np.ndarray
    event_index: np.ndarray
    n_steps: np.ndarray
    history: list | None = None
    events: list = field(default_factory=list)

    def trajectory(self, row: int):
        """(s, y) arrays of the recorded history of one row."""
        if self.history is None:
            raise ValueError("history was not recorded")
        ss, ys = self.history[row]
        return np.asarray(ss), np.asarray(ys)


def _rms(x):
    return np.sqrt(np.mean(x * x, axis=-1))


def _initial_step(fun, y0, f0, direction, span, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, np.abs(span))
    y1 = y0 + (h0 * direction)[:, None] * f0
    f1 = fun(y1)
    d2 = _rms((f1 - f0) / scale) / np.maximum(h0, 1e-300)
    dmax = np.maximum(d1, d2)
    with np.errstate(divide="ignore"):
        h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dmax, 1e-300)) ** 0.2)
    return np.minimum(np.minimum(100 * h0, h1), np.abs(span))


def _dense(y_old, h, K, theta):
    """Dense-output state at fractional step theta (arrays over rows)."""
    Q = np.einsum("nsd,sk->ndk", K, _P)
    p = np.cumprod(np.repeat(theta[:, None], _P.shape[1], axis=1), axis=1)
    return y_old + h[:, None] * np.einsum("ndk,nk->nd", Q, p)


def integrate_batch(fun, y0, span, rtol: float = 1e-10, atol: float = 1e-12, events=(),
                    record: bool = False, monitor=None, max_steps: int = 200_000,
                    event_tol: float = 1e-10) -> BatchResult:
    """Integrate ``y' = fun(y)`` for every row of ``y0`` over ``s in [0, span]``.

    Parameters
    ----------
    fun : callable
        Maps an ``(n, d)`` array of states to their derivatives.
    y0 : array_like, shape (N, d)
    span : float or array_like, shape (N,)
        Signed integration length per row; negative integrates backwards.
    events : sequence of callables
        Each maps ``(n, d)`` states to ``(n,)`` values; a sign change terminates
        the row, with the crossing located by bisection on the dense output to
        ``event_tol`` in s.
    monitor : callable, optional
        Called as ``monitor(rows, s, y)`` after the initial point and each
        accepted step, for on-the-fly diagnostics.
    """
    y = np.array(y0, dtype=float, ndmin=2)
    N, d = y.shape
    span = np.broadcast_to(np.asarray(span, float), (N,)).copy()
    direction = np.where(span < 0, -1.0, 1.0)
    s = np.zeros(N)
    status = np.full(N, SPAN)
    ev_idx = np.full(N, -1)
    n_steps = np.zeros(N, dtype=int)
    history = [([0.0], [y[i].copy()]) for i in range(N)] if record else None
    ev_log = []

    f = fun(y)
    active = span != 0
    h = np.zeros(N)
    if active.any():
        idx = np.flatnonzero(active)
        h[idx] = _initial_step(fun, y[idx], f[idx], direction[idx], span[idx], rtol, atol)
    err_prev = np.ones(N)
    g_prev = [np.asarray(ev(y), float) for ev in events]
    if monitor is not None:
        monitor(np.arange(N), s.copy(), y.copy())

    while active.any():
        idx = np.flatnonzero(active)
        n = idx.size
        remaining = np.abs(span[idx] - s[idx])
        hh = np.minimum(h[idx], remaining)
        dirn = direction[idx]
        hs = hh * dirn
        y_i = y[idx]
        K = np.empty((n, _N_STAGES + 1, d))
        K[:, 0] = f[idx]
        for st in range(1, _N_STAGES):
            dy = np.einsum("nsd,s->nd", K[:, :st], _A[st, :st]) * hs[:, None]
            K[:, st] = fun(y_i + dy)
        y_new = y_i + hs[:, None] * np.einsum("nsd,s->nd", K[:, :_N_STAGES], _B)
        f_new = fun(y_new)
        K[:, -1] = f_new
        err = hs[:, None] * np.einsum("nsd,s->nd", K, _E)
        scale = atol + rtol * np.maximum(np.abs(y_i), np.abs(y_new))
        en = _rms(err / scale)
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(en)
        en = np.where(finite, en, np.inf)
        accept = en <= 1.0

        with np.errstate(divide="ignore"):
            fac_acc = _SAFETY * np.where(en == 0, _MAX_FACTOR / _SAFETY,
                                         en ** -_ALPHA * err_prev[idx] ** _BETA)
            fac_rej = _SAFETY * np.where(np.isfinite(en), en ** -0.2, 0.0)
        fac = np.where(accept, np.clip(fac_acc, _MIN_FACTOR, _MAX_FACTOR),
                       np.clip(fac_rej, _MIN_FACTOR, 1.0))
        h[idx] = hh * fac
        err_prev[idx] = np.where(accept, np.maximum(en, 1e-4), err_prev[idx])

        # step underflow
        tiny = 16 * np.finfo(float).eps * np.maximum(np.abs(s[idx]), 1.0)
        fail = (~accept) & (h[idx] < tiny)
        if fail.any():
            rows = idx[fail]
            status[rows] = STEP_FAILURE
            active[rows] = False

        if not accept.any():
            continue
        acc = np.flatnonzero(accept)
        rows = idx[acc]
        s_new = s[rows] + hs[acc]
        ya = y_new[acc]
        term_theta = np.full(acc.size, np.inf)
        term_ev = np.full(acc.size, -1)
        for k, ev in enumerate(events):
            g_new = np.asarray(ev(ya), float)
            g_old = g_prev[k][rows]
            cross = (np.sign(g_new) != np.sign(g_old)) & (g_old != 0)
            if cross.any():
                ci = np.flatnonzero(cross)
                th = _locate(ev, y_i[acc][ci], hs[acc][ci], K[acc][ci], g_old[ci], event_tol)
                better = th < term_theta[ci]
                term_theta[ci[better]] = th[better]
                term_ev[ci[better]] = k
            g_prev[k][rows] = g_new
        hit = term_ev >= 0
        if hit.any():
            hi = np.flatnonzero(hit)
            yh = _dense(y_i[acc][hi], hs[acc][hi], K[acc][hi], term_theta[hi])
            ya[hi] = yh
            s_new[hi] = s[rows[hi]] + term_theta[hi] * hs[acc][hi]
            for j, row in enumerate(rows[hi]):
                ev_log.append((int(row), int(term_ev[hi][j]), float(s_new[hi][j])))
            status[rows[hi]] = EVENT
            ev_idx[rows[hi]] = term_ev[hi]
            active[rows[hi]] = False

        s[rows] = s_new
        y[rows] = ya
        f[rows] = f_new[acc]
        if hit.any():
            f[rows[hit]] = fun(ya[hit])
        n_steps[rows] += 1
        done = np.abs(s[rows] - span[rows]) <= 0.0
        # snap to the requested end to avoid an extra micro-step
        near = (~hit) & (np.abs(span[rows] - s[rows]) <= 1e-14 * np.maximum(1.0, np.abs(span[rows])))
        s[rows[near]] = span[rows[near]]
        done = done | near
        active[rows[done & ~hit]] = False
        over = n_steps[rows] >= max_steps
        if over.any():
            status[rows[over & active[rows]]] = MAX_STEPS
            active[rows[over]] = False
        if record:
            for j, row in enumerate(rows):
                history[row][0].append(float(s[row]))
                history[row][1].append(y[row].copy())
        if monitor is not None:
            monitor(rows, s[rows].copy(), y[rows].copy())

    return BatchResult(s, y, status, ev_idx, n_steps, history, ev_log)


def _locate(ev, y_old, hs, K, g_old, tol):
    """Bisect the dense output for the first sign change of ev in (0, 1]."""
    lo = np.zeros(len(hs))
    hi = np.ones(len(hs))
    sg = np.sign(g_old)
    habs = np.abs(hs)
    for _ in range(200):
        if np.all((hi - lo) * habs <= tol):
            break
        mid = 0.5 * (lo + hi)
        g = np.asarray(ev(_dense(y_old, hs, K, mid)), float)
        same = np.sign(g) == sg
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return hi
