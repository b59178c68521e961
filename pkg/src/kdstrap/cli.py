"""Command-line driver: ``kdstrap {validate, trapping-scan, flow, verify}``.

Exit codes: 0 success, 1 domain or verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import flow, textio
from .charts import build_extension
from .config import DEFAULT
from .errors import DomainError, KdsError
from .radial import (
    SpacetimeParams,
    discriminant_value,
    horizon_data,
    is_subextremal,
    lambda_interval,
    verify_h_negative,
)
from .trapping import trapped_radius
from .verify import HEADLINE, SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

TABLE_COLUMNS = ["xi_t", "xi_phi", "case", "r_trap", "F_pp", "rate_equator"]
_TOL_KEYS = {"root_tol", "identity_tol", "grid", "char_tol", "pole_margin", "verify_grid"}


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, defaults_headline: bool = False):
    p.add_argument("--lambda", dest="lam", type=float, help="cosmological constant")
    p.add_argument("--mass", type=float, help="black hole mass m")
    p.add_argument("--spin", type=float, help="rotation parameter a")
    p.add_argument("--params", help="key = value file with lambda, mass, spin and tolerance keys")
    p.add_argument("--seed", type=int, default=1, help="seed for randomized experiments (default 1)")
    p.add_argument("--grid", type=int, help="grid size")
    p.add_argument("--tol", type=float, help="tolerance")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), help="output format")
    p.set_defaults(headline=defaults_headline)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kdstrap", description="Kerr-de Sitter trapping and radial-point toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="subextremality, horizons and the admissible Lambda interval")
    _common(p)

    p = sub.add_parser("trapping-scan", help="trapped radius over covector directions")
    _common(p)

    p = sub.add_parser("flow", help="integrate one bicharacteristic")
    _common(p)
    p.add_argument("--kind", choices=flow.KINDS, default="wave-rot")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--theta", type=float, default=math.pi / 2)
    p.add_argument("--xi", type=float, nargs="+", required=True,
                   help="covector: xi_tau xi_r xi_psi xi_theta (wave) or xi_r xi_psi xi_theta (mode)")
    p.add_argument("--span", type=float, default=100.0)
    p.add_argument("--margin", type=float, default=0.01,
                   help="exit distance from the horizons, as a fraction of r_c - r_e (rotating chart)")
    p.add_argument("--close", action="store_true",
                   help="replace xi_theta by the nonnegative root of q = 0")

    p = sub.add_parser("verify", help="run a verification suite")
    _common(p, defaults_headline=True)
    p.add_argument("--suite", choices=sorted(SUITES), default="all")
    return ap


def resolve_params(ns) -> SpacetimeParams:
    """Parameters from the file, overridden by flags; the headline triple fills gaps for verify."""
    vals = {}
    if ns.params:
        try:
            data = textio.load_kv(ns.params)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read parameter file: {exc}") from exc
        unknown = set(data) - {"lambda", "mass", "spin"} - _TOL_KEYS
        if unknown:
            raise UsageError(f"unknown keys in parameter file: {sorted(unknown)}")
        vals = {k: data[k] for k in ("lambda", "mass", "spin") if k in data}
    for key, flag in (("lambda", ns.lam), ("mass", ns.mass), ("spin", ns.spin)):
        if flag is not None:
            vals[key] = flag
    if ns.headline:
        vals = {**HEADLINE.as_dict(), **vals}
    missing = [k for k in ("lambda", "mass", "spin") if k not in vals]
    if missing:
        raise UsageError(f"missing parameters: {', '.join(missing)}")
    try:
        return SpacetimeParams(float(vals["lambda"]), float(vals["mass"]), float(vals["spin"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise UsageError(f"malformed parameters: {exc}") from exc


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report_text(report: dict, fmt: str | None) -> str:
    if fmt == "json":
        return textio.dump_json(report)
    flat = {}

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k, v in obj.items():
                walk(f"{prefix}.{k}" if prefix else k, v)
        else:
            flat[prefix] = obj

    walk("", textio.to_jsonable(report))
    if fmt == "csv":
        return textio.table_csv([{"key": k, "value": v} for k, v in flat.items()], ["key", "value"])
    return textio.dump_kv(flat)


def cmd_validate(ns) -> int:
    p = resolve_params(ns)
    rep = {"params": p.as_dict(), "discriminant": discriminant_value(p), "subextremal": is_subextremal(p)}
    iv = lambda_interval(p.spin, p.mass)
    rep["lambda_interval"] = iv.as_dict()
    if rep["subextremal"]:
        hz = horizon_data(p)
        rep["horizons"] = hz.as_dict()
        rep["h_negative"] = verify_h_negative(p, ns.grid or DEFAULT.grid, hz).as_dict()
    else:
        if iv.empty:
            rep["hint"] = "no Lambda > 0 is subextremal for this (mass, spin)"
        else:
            rep["hint"] = f"subextremal iff Lambda in ({iv.lambda0!r}, {iv.lambda1!r})"
    _emit(_report_text(rep, ns.format), ns.out)
    if not rep["subextremal"]:
        sys.stderr.write(f"not subextremal: {rep['hint']}\n")
        return EXIT_FAIL
    return EXIT_OK


def cmd_trapping_scan(ns) -> int:
    p = resolve_params(ns).validated()
    hz = horizon_data(p)
    n = ns.grid or 64
    if n < 1:
        raise UsageError("--grid must be positive")
    rows = []
    for j in range(n):
        ang = 2.0 * math.pi * j / n
        xt, xp = math.cos(ang), math.sin(ang)
        # exact zeros where the circle meets the axes
        xt = 0.0 if abs(xt) < 1e-15 else xt
        xp = 0.0 if abs(xp) < 1e-15 else xp
        rows.append(trapped_radius(p, xt, xp, hz).as_dict())
    if ns.format == "json":
        text = textio.dump_json({"params": p.as_dict(), "rows": rows})
    else:
        text = textio.table_csv(rows, TABLE_COLUMNS)
    _emit(text, ns.out)
    return EXIT_OK


def _initial_state(ns, p, prof) -> np.ndarray:
    xi = list(ns.xi)
    if ns.kind == "wave-rot":
        if len(xi) != 4:
            raise UsageError("wave-rot needs four covector components")
        y = np.array([0.0, ns.r, 0.0, ns.theta, *xi])
        ith = 7
    else:
        if len(xi) != 3:
            raise UsageError(f"{ns.kind} needs three covector components")
        y = np.array([ns.r, 0.0, ns.theta, *xi])
        ith = 5
    if ns.close:
        y[ith] = 0.0
        rest = flow.symbol_batch(ns.kind, prof, y[None, :])[0]
        val = -rest / float(p.c(ns.theta))
        if val < 0:
            raise DomainError("no real xi_theta puts this state on the characteristic set")
        y[ith] = math.sqrt(val)
    return y


def cmd_flow(ns) -> int:
    p = resolve_params(ns).validated()
    prof = build_extension(p)
    hz = prof.horizons
    tol = ns.tol if ns.tol is not None else 1e-10
    y = _initial_state(ns, p, prof)
    if ns.kind == "mode-starrot":
        thresholds = prof.slab
    else:
        # rotating BL-type covectors blow up at the horizons; stop just inside
        eps = ns.margin * hz.width
        thresholds = (hz.r_e + eps, hz.r_c - eps)
    lo, hi = thresholds
    if not lo < y[1 if ns.kind == "wave-rot" else 0] < hi:
        raise DomainError(f"r must lie in ({lo}, {hi}) for {ns.kind}")
    traj = flow.integrate(ns.kind, prof, y, ns.span, tol=tol, r_thresholds=thresholds, xi_cap=1e8)
    summary = {"kind": ns.kind, "termination": traj.termination, "steps": len(traj.s) - 1,
               "s_end": float(traj.s[-1]), "q_drift": traj.q_drift, "K_drift": traj.K_drift}
    if ns.format == "json":
        text = textio.dump_json({"summary": summary, "s": traj.s, "states": traj.states,
                                 "q": traj.q, "K": traj.K, "events": traj.events})
    else:
        text = textio.trajectory_csv(traj)
    _emit(text, ns.out)
    stream = sys.stdout if ns.out else sys.stderr
    stream.write(textio.dump_kv(summary))
    return EXIT_OK if traj.termination in ("span", "event") else EXIT_FAIL


def cmd_verify(ns) -> int:
    p = resolve_params(ns)
    rep = run_suite(ns.suite, p, ns.seed)
    _emit(_report_text(rep, ns.format or "json"), ns.out)
    for name, chk in rep["checks"].items():
        sys.stderr.write(f"{name}: {'PASS' if chk['passed'] else 'FAIL'}\n")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


COMMANDS = {"validate": cmd_validate, "trapping-scan": cmd_trapping_scan, "flow": cmd_flow,
            "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return COMMANDS[ns.command](ns)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except KdsError as exc:
        sys.stderr.write(f"{type(exc).__name__}: {exc}\n")
        return EXIT_FAIL
