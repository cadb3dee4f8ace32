"""Command-line front end.

    skewmix {pressure,spectrum,traces,correlations,heataverage,gamma-table} --config FILE [--out DIR]

Every command writes ``<out>/<command>.json`` (and CSV tables with
``--format csv``) stamped with the config hash and the package version.
Exit status: 0 on success, 2 for a bad config, 3 when a numerical check fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import ConfigError, ExperimentConfig, build_objects, load_config

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3


class CheckFailure(RuntimeError):
    """A numerical invariant did not hold; carries the partial report."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


def _c(z) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _irrep_key(irrep):
    return list(irrep.id) if isinstance(irrep.id, tuple) else irrep.id


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map; results are independent of scheduling."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class Context:
    def __init__(self, cfg: ExperimentConfig, threads: int):
        from .thermo import rpf_solve

        self.cfg = cfg
        self.threads = threads
        self.tmap, self.phi, self.group, self.tau = build_objects(cfg)
        self.rpf = rpf_solve(self.tmap, self.phi, cfg.N)

    @property
    def pressure(self) -> float:
        return self.rpf.pressure

    def irreps(self):
        return self.group.irreps(self.cfg.kappa_max)

    def pressure2(self) -> float:
        from .heataverage import pressure_of_double

        return pressure_of_double(self.tmap, self.phi, self.cfg.N, self.pressure)


# --------------------------------------------------------------------------
# commands


def cmd_pressure(ctx: Context) -> dict:
    from scipy.special import logsumexp

    from .dynamics import periodic_orbits
    from .thermo import rpf_solve

    cfg = ctx.cfg
    rows = {}
    ok = True
    for label, pot in (("phi", ctx.phi), ("2phi", ctx.phi.scale(2.0))):
        rpf = rpf_solve(ctx.tmap, pot, cfg.N).pressure
        n = cfg.pressure_period
        logs = [float(logsumexp(periodic_orbits(ctx.tmap, m).birkhoff(pot))) for m in (n - 2, n - 1, n)]
        plain = logs[-1] / n
        ratio = logs[2] - logs[1]
        # successive ratios converge geometrically; their spread bounds the remaining error
        spread = abs(ratio - (logs[1] - logs[0]))
        allowed = max(cfg.tolerances["pressure"], 2.0 * spread)
        diff = abs(ratio - rpf)
        ok &= diff <= allowed
        rows[label] = {"rpf": rpf, "orbit_mean": plain, "orbit_ratio": ratio, "difference": diff,
                       "allowed": allowed, "period": n}
    report = {"pressure": rows, "agreement": bool(ok)}
    if not ok:
        raise CheckFailure("pressure routes disagree", report)
    return report


def _spectrum_task(ctx: Context):
    from .twisted import build_twisted_matrix, eigenvalues

    def run(irrep):
        op = build_twisted_matrix(ctx.tmap, ctx.phi, ctx.rpf, ctx.tau, irrep, ctx.cfg.N)
        return eigenvalues(op)

    return run


def cmd_spectrum(ctx: Context) -> dict:
    from .twisted import spectrum_record

    specs = _pmap(_spectrum_task(ctx), ctx.irreps(), ctx.threads)
    p2 = ctx.pressure2()
    records, radii = [], []
    ok = True
    tol = ctx.cfg.tolerances["radius"]
    for sres in specs:
        rec = spectrum_record(sres, group_name=ctx.group.name)
        rad = sres.spectral_radius
        rec["spectral_radius"] = rad
        records.append(rec)
        radii.append({"irrep_id": _irrep_key(sres.irrep), "kappa": sres.irrep.kappa, "radius": rad})
        if rad > 1.0 + tol:
            ok = False
        if sres.irrep.is_trivial and abs(rad - 1.0) > tol:
            ok = False
    report = {
        "pressure": ctx.pressure,
        "pressure2": p2,
        "conjecture_band": math.exp(p2 / 2.0),
        "theorem_threshold": _thresholds(ctx.group, p2),
        "radii": radii,
        "spectra": records,
        "radius_check": bool(ok),
    }
    if not ok:
        raise CheckFailure("a spectral radius exceeds 1 or the trivial radius differs from 1", report)
    return report


def _thresholds(group, p2: float) -> dict:
    from .groups import GroupError, gamma_constant

    out = {"gamma": gamma_constant(group), "value": math.exp(gamma_constant(group) * p2)}
    try:
        g = gamma_constant(group, improved=True)
    except GroupError:
        return out
    out.update({"gamma_improved": g, "value_improved": math.exp(g * p2)})
    return out


def cmd_traces(ctx: Context) -> dict:
    from .twisted import (
        build_twisted_matrix,
        contour_extract_W,
        eigenvalues,
        trace_matrix,
        trace_periodic,
        zeta_series_from_operator,
    )

    cfg = ctx.cfg

    def run(irrep):
        op = build_twisted_matrix(ctx.tmap, ctx.phi, ctx.rpf, ctx.tau, irrep, cfg.N)
        sres = eigenvalues(op)
        zs = zeta_series_from_operator(op, max(cfg.n_values), sres)
        lead = abs(sres.eigenvalues[0]) if len(sres.eigenvalues) else 1.0
        r = 0.5 / max(lead, 1e-300)
        rows = []
        for n in cfg.n_values:
            a = trace_periodic(ctx.tmap, ctx.phi, ctx.tau, irrep, n, ctx.pressure, ctx.rpf)
            b = trace_matrix(op, n)
            c = contour_extract_W(zs, n, r)
            scale = 1.0 + abs(a)
            rows.append({"irrep_id": _irrep_key(irrep), "n": n, "periodic": _c(a), "matrix": _c(b),
                         "contour": _c(c), "matrix_error": abs(a - b) / scale, "contour_error": abs(a - c) / scale})
        return rows

    table = [row for rows in _pmap(run, ctx.irreps(), ctx.threads) for row in rows]
    worst = max((max(r["matrix_error"], r["contour_error"]) for r in table), default=0.0)
    report = {"rows": table, "max_discrepancy": worst, "tolerance": cfg.tolerances["trace"]}
    if worst > cfg.tolerances["trace"]:
        raise CheckFailure(f"trace routes disagree by {worst:.3e}", report)
    return report


def _correlation_irreps(ctx: Context):
    ids = ctx.cfg.correlations.get("irreps")
    if ids is None:
        nontrivial = [ir for ir in ctx.irreps() if not ir.is_trivial]
        return nontrivial[:1] or ctx.irreps()[:1]
    out = []
    for i in ids:
        key = tuple(int(v) for v in i) if isinstance(i, (list, tuple)) else int(i)
        try:
            out.append(ctx.group.irrep(key))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"unknown irrep {i!r}: {exc}") from None
    return out


def cmd_correlations(ctx: Context) -> dict:
    from .correlations import (
        SkewSystem,
        correlation_series_direct,
        correlation_series_predicted,
        decay_rate_estimate,
        default_subsequence,
        eigen_observable,
        series_record,
    )

    cfg = ctx.cfg
    n_max = int(cfg.correlations.get("n_max", 12))
    if n_max < 4:
        raise ConfigError("correlations.n_max must be at least 4")
    system = SkewSystem(ctx.tmap, ctx.phi, ctx.rpf, ctx.tau)

    def run(irrep):
        eo = eigen_observable(system, irrep, cfg.N)
        d = correlation_series_direct(system, [(1.0, eo)], n_max)
        p = correlation_series_predicted([(1.0, eo)], n_max, system)
        sub = default_subsequence(d.angles, n_max)
        err = float(np.max(np.abs(d.values - p.values) / (1.0 + np.abs(p.values))))
        return {
            "irrep_id": _irrep_key(irrep),
            "eigenvalue": _c(eo.eigenvalue),
            "modulus": eo.rho,
            "subsequence": sub,
            "decay_estimate_direct": decay_rate_estimate(d, sub),
            "decay_estimate_predicted": decay_rate_estimate(p, sub),
            "agreement_error": err,
            "series": [series_record(d), series_record(p)],
        }

    entries = _pmap(run, _correlation_irreps(ctx), ctx.threads)
    p2 = ctx.pressure2()
    worst = max(e["agreement_error"] for e in entries)
    report = {"observables": entries, "threshold": _thresholds(ctx.group, p2), "pressure2": p2,
              "max_agreement_error": worst, "tolerance": cfg.tolerances["correlation"]}
    if worst > cfg.tolerances["correlation"]:
        raise CheckFailure(f"direct and predicted correlations differ by {worst:.3e}", report)
    return report


def cmd_heataverage(ctx: Context) -> dict:
    from .groups import beta_exponent_fit, beta_value
    from .heataverage import (
        contradiction_scheme,
        diagonal_lower_bound_check,
        fit_A,
        heat_grid,
    )

    cfg, opts = ctx.cfg, ctx.cfg.heataverage
    coarse_t = [float(t) for t in opts.get("coarse_t", [1e-3, 1e-2, 1e-1])]
    coarse_n = [int(n) for n in opts.get("coarse_n", [1, 4, 8])]
    if any(n not in cfg.n_values for n in coarse_n):
        raise ConfigError("heataverage.coarse_n must lie inside n_range")
    improved = bool(opts.get("improved", False))
    coarse = heat_grid(ctx.tmap, ctx.phi, ctx.tau, coarse_t, coarse_n, pressure=ctx.pressure)
    A = fit_A(coarse)
    grid = heat_grid(ctx.tmap, ctx.phi, ctx.tau, cfg.t_grid, cfg.n_values, pressure=ctx.pressure)
    taken = {(round(math.log(r.t), 12), r.n) for r in coarse}
    cells, worst = [], math.inf
    for rep in grid:
        rep = rep.with_bound(A)
        held_out = (round(math.log(rep.t), 12), rep.n) not in taken
        _ok, margin = diagonal_lower_bound_check(rep)
        if held_out:
            worst = min(worst, margin)
        cells.append({"t": rep.t, "n": rep.n, "S": rep.S_value, "diagonal": rep.diagonal_value,
                      "bound": rep.lower_bound_value, "margin": margin, "held_out": held_out})
    beta_fit = beta_exponent_fit(ctx.group, cfg.t_grid) if len(set(cfg.t_grid)) >= 3 else None
    scheme = contradiction_scheme(ctx.tmap, ctx.phi, ctx.tau, float(opts.get("rho_hypothesis", 0.3)),
                                  float(opts.get("epsilon", 1e-3)), improved=improved, pressure=ctx.pressure)
    report = {
        "A": A,
        "cells": cells,
        "worst_held_out_margin": worst if math.isfinite(worst) else None,
        "beta_fit": beta_fit,
        "beta_expected": beta_value(ctx.group, improved),
        "contradiction": {
            "rho_hypothesis": scheme.rho_hypothesis, "epsilon": scheme.epsilon, "alpha": scheme.alpha,
            "beta": scheme.beta, "rho_critical": scheme.rho_critical, "threshold": scheme.threshold,
            "contradiction": scheme.contradiction, "outgrows_low_irreps": scheme.outgrows_low_irreps,
            "n": list(scheme.n_values),
            "lower_rate": list(scheme.lhs_rates), "upper_rate": list(scheme.rhs_rates),
        },
        "pressure2": scheme.pressure2,
    }
    if math.isfinite(worst) and worst < 0:
        raise CheckFailure(f"diagonal bound violated on a held-out cell (margin {worst:.3e})", report)
    return report


def cmd_gamma_table(ctx: Context | None) -> dict:
    from .groups import SO3, SU2, Torus

    rows = []
    p2 = ctx.pressure2() if ctx is not None else None
    for group in (Torus(1), Torus(2), Torus(3), SU2(), SO3()):
        row = {"group": repr(group), "rank": group.rank, "dim": group.dim}
        row.update(_thresholds(group, p2) if p2 is not None else _thresholds(group, 0.0))
        if p2 is None:
            row = {k: v for k, v in row.items() if not k.startswith("value")}
        rows.append(row)
    return {"pressure2": p2, "rows": rows}


COMMANDS = {
    "pressure": cmd_pressure,
    "spectrum": cmd_spectrum,
    "traces": cmd_traces,
    "correlations": cmd_correlations,
    "heataverage": cmd_heataverage,
    "gamma-table": cmd_gamma_table,
}

CSV_TABLES = {
    "traces": ("rows", ["irrep_id", "n", "periodic", "matrix", "contour", "matrix_error", "contour_error"]),
    "heataverage": ("cells", ["t", "n", "S", "diagonal", "bound", "margin", "held_out"]),
    "spectrum": ("radii", ["irrep_id", "kappa", "radius"]),
    "gamma-table": ("rows", None),
}


# --------------------------------------------------------------------------
# output


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _csv_value(v):
    if isinstance(v, list):
        return " ".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return v


def write_outputs(command: str, report: dict, out: Path, fmt: str) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    stem = command.replace("-", "_")
    path = out / f"{stem}.json"
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written = [path]
    if fmt == "csv":
        if command == "correlations":
            cpath = out / f"{stem}.csv"
            with open(cpath, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["irrep_id", "n", "C", "method"])
                for entry in report["observables"]:
                    for s in entry["series"]:
                        for n, v in zip(s["n"], s["values"]):
                            w.writerow([_csv_value(entry["irrep_id"]), n, repr(float(v)), s["method"]])
            written.append(cpath)
        elif command in CSV_TABLES:
            key, cols = CSV_TABLES[command]
            rows = report[key]
            cols = cols or (sorted(rows[0]) if rows else [])
            cpath = out / f"{stem}.csv"
            with open(cpath, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for row in rows:
                    w.writerow([_csv_value(_jsonable(row.get(c))) for c in cols])
            written.append(cpath)
    return written


def _summary(command: str, report: dict) -> str:
    if command == "pressure":
        p = report["pressure"]
        return f"P(phi) = {p['phi']['rpf']:.12g}  P(2phi) = {p['2phi']['rpf']:.12g}  agreement: {report['agreement']}"
    if command == "spectrum":
        worst = max((r["radius"] for r in report["radii"] if r["kappa"] > 0), default=float("nan"))
        th = report["theorem_threshold"]
        improved = f" (improved {th['value_improved']:.6g})" if "value_improved" in th else ""
        return f"{len(report['radii'])} irreps; largest nontrivial radius {worst:.6g}; threshold {th['value']:.6g}{improved}"
    if command == "traces":
        return f"{len(report['rows'])} rows; max discrepancy {report['max_discrepancy']:.3e}"
    if command == "correlations":
        parts = [f"{e['irrep_id']}: |lambda| = {e['modulus']:.6g}, estimate {e['decay_estimate_direct']:.6g}"
                 for e in report["observables"]]
        th = report["threshold"]
        return "; ".join(parts) + f"; threshold {th.get('value_improved', th['value']):.6g}"
    if command == "heataverage":
        return (f"A = {report['A']:.6g}; worst held-out margin {report['worst_held_out_margin']}; "
                f"beta fit {report['beta_fit']}")
    return "\n".join(
        f"{r['group']}: gamma = {r['gamma']:.6g}" + (f", improved {r['gamma_improved']:.6g}" if "gamma_improved" in r else "")
        for r in report["rows"]
    )


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "gamma-table"), help="YAML experiment file")
        p.add_argument("--out", help="output directory (default: the config's 'output')")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        p.add_argument("--seed", type=int, default=0, help="reserved; every command is deterministic")
        p.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config) if args.config else None
        out = Path(args.out or (cfg.output if cfg else "out"))
        with threadpool_limits(limits=args.threads):
            ctx = Context(cfg, args.threads) if cfg else None
            status, message = EXIT_OK, None
            try:
                report = COMMANDS[args.command](ctx)
            except CheckFailure as exc:
                report, status, message = exc.report, EXIT_CHECK, str(exc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = {
        "command": args.command,
        "version": __version__,
        "config_hash": cfg.config_hash() if cfg else None,
        "threads": args.threads,
        "status": "ok" if status == EXIT_OK else "check-failed",
        **report,
    }
    for path in write_outputs(args.command, report, out, args.format):
        print(f"wrote {path}")
    print(_summary(args.command, report))
    if message:
        print(f"check failed: {message}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
