"""Command-line front end.

Every run prints one JSON object (the footer) on stdout with ``status``,
``exit_code`` and, on failure, a machine-readable ``reason``.  Exit codes:
0 success, 1 configuration error, 2 a checked identity or certificate failed,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import coupling, decoupling, ldp, level3, renewal
from .config import RunConfig, parse_config
from .curves import write_csv
from .errors import (AbsoluteContinuityError, BudgetExceeded, CheckFailure, ConfigError,
                     ConvergenceError, LDShiftError)
from .measures import Uniform

COMMANDS = ("pressure", "rate", "decoupling", "psi-check", "fr-check", "level3", "chernoff", "hmc", "probe")
OK, CONFIG, CHECK, NONCONV = 0, 1, 2, 3


def _jsonable(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldshift", description="Finite-t large-deviation diagnostics for shift measures.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI run configuration")
    ap.add_argument("--out", help="CSV output path")
    ap.add_argument("--alpha-min", type=float)
    ap.add_argument("--alpha-max", type=float)
    ap.add_argument("--alpha-step", type=float)
    ap.add_argument("--t", type=int)
    ap.add_argument("--t-max", type=int)
    ap.add_argument("--tau", type=int)
    ap.add_argument("--v-max", type=int)
    ap.add_argument("--n", type=int, help="block length for psi-check")
    ap.add_argument("--kind", choices=("sld", "ud", "ssd"), help="decoupling condition")
    ap.add_argument("--example", type=int, help="renewal preset 1..6")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--tol", type=float, help="pass/fail tolerance for identity checks")
    return ap


def _merge(cfg: RunConfig, args) -> dict:
    s = cfg.sweep
    for key in ("alpha_min", "alpha_max", "alpha_step", "t", "t_max", "tau", "v_max", "n", "kind",
                "seed", "samples", "threads", "tol"):
        val = getattr(args, key)
        if val is not None:
            s[key] = val
    if args.t_max is not None:
        s["t_list"] = list(range(1, args.t_max + 1))
    if s["threads"] is None:
        s["threads"] = os.cpu_count() or 1
    if s["threads"] < 1:
        raise ConfigError("--threads must be at least 1")
    cfg.alpha_grid()
    return s


def _out(cfg: RunConfig, args) -> str | None:
    return args.out or cfg.output.get("csv")


# commands ----------------------------------------------------------------


def cmd_pressure(cfg, s, out):
    cfg.require("measure")
    grid = cfg.alpha_grid()
    if cfg.hat_measure is not None:
        curve = ldp.entropy_pressure_curve(cfg.measure, cfg.hat_measure, grid, s["t"])
    else:
        cfg.require("observable")
        curve = ldp.pressure_curve(cfg.measure, cfg.observable, grid, s["t"], threads=s["threads"])
    if out:
        ldp.pressure_csv(curve, out)
    return OK, {"points": len(grid), "t": s["t"], "convexity_defect": curve.convexity_defect(),
                "overflow": curve.meta.get("overflow", [])}


def cmd_rate(cfg, s, out):
    cfg.require("measure")
    grid = cfg.alpha_grid()
    if cfg.hat_measure is not None:
        curve = ldp.entropy_pressure_curve(cfg.measure, cfg.hat_measure, grid, s["t"])
        q_fn = None
    else:
        cfg.require("observable")
        curve = ldp.pressure_curve(cfg.measure, cfg.observable, grid, s["t"], threads=s["threads"])
        q_fn = lambda a: ldp.finite_pressure(cfg.measure, cfg.observable, a, s["t"])  # noqa: E731
    rate = ldp.legendre_transform(curve, q_fn=q_fn)
    if out:
        ldp.rate_csv(rate, out)
    return OK, {"points": len(rate.s), "t": s["t"], "min_I": float(np.min(rate.I))}


def cmd_decoupling(cfg, s, out):
    cfg.require("measure")
    kind = s["kind"]
    ts = s["t_list"] or [s["t"]]
    reports = []
    for t in ts:
        spec = decoupling.DecouplingSpec(kind, s["tau"], s["v_max"])
        if kind == "sld":
            r = decoupling.verify_sld(cfg.measure, t, spec)
        elif kind == "ud":
            r = decoupling.verify_ud(cfg.measure, t, spec)
        else:
            cfg.require("hat_measure")
            r = decoupling.verify_ssd(cfg.measure, cfg.hat_measure, t, spec)
        reports.append(r)
    if out:
        write_csv(out, ["t", "c_star"], [(r.t, r.c_star) for r in reports])
    body = {"reports": [r.to_dict() for r in reports]}
    if any(not r.finite for r in reports):
        bad = [r.t for r in reports if not r.finite]
        return CHECK, {**body, "reason": f"decoupling_failed at t={bad}"}
    return OK, body


def cmd_psi_check(cfg, s, out):
    cfg.require("measure")
    ms = [cfg.measure] + ([cfg.hat_measure] if cfg.hat_measure is not None else [])
    layout = coupling.block_counts(s["n"], s["t"], s["tau"])
    diag = coupling.psi_certificate(ms, layout, f=cfg.observable)
    body = diag.to_dict()
    if layout.degenerate:
        return OK, {**body, "degenerate": True}
    if not diag.g_min <= diag.g_analytic + 1e-12:
        return CHECK, {**body, "reason": "g_min exceeds the analytic bound"}
    return OK, body


def cmd_fr_check(cfg, s, out):
    cfg.require("measure", "involution")
    grid = cfg.alpha_grid()
    tol = s["tol"] if s["tol"] is not None else 1e-12
    fd = ldp.fluctuation_identities(cfg.measure, cfg.involution, grid, s["t"])
    body = {"t": s["t"], "gc_defect": fd.gc_defect, "transient_defect": fd.transient_defect}
    if fd.gc_defect > tol or fd.transient_defect > max(tol, 1e-10):
        return CHECK, {**body, "reason": "fluctuation identity defect above tolerance"}
    return OK, body


def cmd_level3(cfg, s, out):
    cfg.require("measure")
    P = cfg.measure
    Q = cfg.q_measure if cfg.q_measure is not None else Uniform(P.A, P.alphabet)
    ts = s["t_list"] or list(range(1, s["t"] + 1))
    reports = level3.entropy_sweep(Q, P, ts)
    if out:
        level3.level3_csv(reports, out)
    body = {"t": ts[-1], "ent_rate": reports[-1].ent_rate}
    if cfg.involution is not None:
        tol = s["tol"] if s["tol"] is not None else 1e-12
        chk = level3.level3_fr_check(Q, P, cfg.involution, ts[-1])
        body.update(fr_defect=chk.defect, entropy_defect=chk.entropy_defect, infinite=chk.infinite)
        if chk.infinite is None and (chk.defect > tol or chk.entropy_defect > tol):
            return CHECK, {**body, "reason": "level-3 identity defect above tolerance"}
    return OK, body


def cmd_chernoff(cfg, s, out):
    cfg.require("measure", "hat_measure")
    curve = ldp.chernoff_curve(cfg.measure, cfg.hat_measure, s["t"])
    P, Ph, t = cfg.measure, cfg.hat_measure, s["t"]
    res = ldp.chernoff_exponent(curve, e_fn=lambda a: ldp.entropy_pressure(P, Ph, -a, t))
    if out:
        ldp.pressure_csv(curve, out)
    return OK, {"t": t, "exponent": res.exponent, "minimizer": res.minimizer, "symmetric": res.symmetric}


def cmd_hmc(cfg, s, out, example):
    if example is not None:
        pair = renewal.preset(example)
    else:
        cfg.require("hmc")
        pair = cfg.hmc
    qc = renewal.q_curve(pair, cfg.alpha_grid(), threads=s["threads"])
    if out:
        qc.to_csv(out)
    cases = {}
    for r in qc.results:
        cases[r.case] = cases.get(r.case, 0) + 1
    return OK, {"pair": pair.name, "rows": len(qc.results), "cases": cases,
                "transitions": [[a, l, r] for a, l, r in qc.transitions],
                "approximate": sum(1 for r in qc.results if r.approximate)}


def cmd_probe(cfg, s, out):
    cfg.require("measure", "observable")
    interval = s["interval"] or (0.7, 1.0)
    ts = s["t_list"] or [s["t"]]
    rows = ldp.empirical_ldp_probe(cfg.measure, cfg.observable, interval, ts, s["samples"], s["seed"],
                                   threads=s["threads"])
    if out:
        ldp.probe_csv(rows, out)
    body = {"rows": [dict(zip(ldp.PROBE_HEADER + ["hits"], list(r.csv_row()) + [r.hits])) for r in rows]}
    if all(r.hits == 0 for r in rows):
        body["warning"] = "zero hits at every t"
    return OK, body


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    footer = {"command": args.command}
    try:
        if args.config:
            with open(args.config) as fh:
                cfg = parse_config(fh.read())
        else:
            cfg = RunConfig()
        s = _merge(cfg, args)
        out = _out(cfg, args)
        handler = {
            "pressure": cmd_pressure, "rate": cmd_rate, "decoupling": cmd_decoupling,
            "psi-check": cmd_psi_check, "fr-check": cmd_fr_check, "level3": cmd_level3,
            "chernoff": cmd_chernoff, "probe": cmd_probe,
        }
        if args.command == "hmc":
            code, body = cmd_hmc(cfg, s, out, args.example)
        else:
            code, body = handler[args.command](cfg, s, out)
        footer.update(body)
        if out:
            footer["csv"] = out
    except (ConfigError, BudgetExceeded, AbsoluteContinuityError, OSError, ValueError) as e:
        code = CONFIG
        footer["reason"] = f"{type(e).__name__}: {e}"
    except CheckFailure as e:
        code = CHECK
        footer["reason"] = f"CheckFailure: {e}"
    except ConvergenceError as e:
        code = NONCONV
        footer["reason"] = f"ConvergenceError: {e}"
    except LDShiftError as e:
        code = CHECK
        footer["reason"] = f"{type(e).__name__}: {e}"
    footer["status"] = "ok" if code == OK else "error"
    footer["exit_code"] = code
    text = json.dumps(_jsonable(footer), indent=2, sort_keys=True)
    print(text)
    if "cfg" in locals() and cfg.output.get("json"):
        with open(cfg.output["json"], "w") as fh:
            fh.write(text + "\n")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
