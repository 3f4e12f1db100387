"""Command-line front end.

Subcommands
-----------
simulate   draw a synthetic dataset and write it as delimited text
fit        estimate a potential-outcome curve on a grid
bandwidth  score candidate bandwidths by cross-validation and pick one
effect     estimate both curves and their difference with confidence limits
threshold  search for the net-benefit-maximizing common cutoff
bench      replicate the full pipeline and average integrated squared errors

Every table-producing run writes a JSON manifest next to the table.  The
manifest's hash covers the command, resolved parameters, and input file
digests; the same hash is stamped into the table header, so tables can be
traced back to the invocation that made them.  Timestamps live only in the
manifest, which keeps reruns byte-identical.

Exit codes: 0 on success, 1 when a computation fails (bad data, infeasible
bandwidths, missing files), 2 for usage errors (unknown flags, conflicting
options), the argparse convention.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bandwidth import BandwidthSearch, default_search, select_bandwidth
from .data import ColumnSchema, TargetOutcome, Thresholds, load_dataset, write_dataset
from .errors import DomainError, RdmcError
from .estimators import EstimatorMethod, default_grid, estimate_curve
from .inference import dr_variance, effect_curve, kde_fit
from .nuisance import (
    DEFAULT_OUTCOME_SPEC,
    DEFAULT_PROPENSITY_SPEC,
    FeatureSpec,
    fit_outcome,
    fit_propensity,
)
from .simulation import (
    SimConfig,
    generate,
    run_benchmark,
    table1_cells,
    table2_cells,
)
from .threshold import CostSpec, optimize_threshold

SCHEMA_VERSION = 1

INTERPRETATION = {
    "lscv_ranges": "cross-validation for g1 evaluates units with x > c0; g0 uses x < c1",
    "ise": "integrated squared error weights the squared difference by the x density",
}


@dataclass(frozen=True)
class RunManifest:
    """A fully resolved invocation: what to run, on what, writing where."""

    command: str
    parameters: dict
    inputs: tuple[str, ...]
    out: str | None


def _fmt(v) -> str:
    return repr(float(v))


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_core(manifest: RunManifest) -> dict:
    """The reproducible part of a run record; its hash stamps the tables."""
    inputs = []
    for p in manifest.inputs:
        path = Path(p)
        if not path.exists():
            raise DomainError(f"input file not found: {path}")
        inputs.append({"path": str(path), "sha256": _sha256_file(path)})
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "rdmc",
        "version": __version__,
        "command": manifest.command,
        "parameters": manifest.parameters,
        "interpretation": INTERPRETATION,
        "inputs": inputs,
        "outputs": [manifest.out] if manifest.out else [],
    }


def manifest_hash(core: dict) -> str:
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()


def _write_manifest(core: dict, digest: str, out: Path, results: dict) -> Path:
    sidecar = out.with_name(out.name + ".manifest.json")
    payload = dict(core)
    payload["manifest_sha256"] = digest
    payload["results"] = results
    payload["created_at"] = datetime.now(timezone.utc).isoformat()
    sidecar.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return sidecar


def _write_table(path: Path, command: str, digest: str, units: str, header: list[str], rows):
    with path.open("w", newline="") as fh:
        fh.write(f"# rdmc {command} v{__version__}\n")
        fh.write(f"# units: {units}\n")
        fh.write(f"# manifest_sha256: {digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _add_kernel_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--kernel",
        choices=("epanechnikov", "gaussian", "triangular"),
        default="epanechnikov",
        help="smoothing kernel (default: epanechnikov)",
    )
    p.add_argument("--grid", type=int, default=201, help="number of grid points (default: 201)")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="delimited input file")
    p.add_argument("--c0", type=float, required=True, help="cutoff of group 0")
    p.add_argument("--c1", type=float, required=True, help="cutoff of group 1")
    p.add_argument("--x-col", default="x", help="running variable column (default: x)")
    p.add_argument("--d-col", default="d", help="group indicator column (default: d)")
    p.add_argument("--y-col", default="y", help="outcome column (default: y)")
    p.add_argument(
        "--w-cols", default="w1,w2", help="comma-separated covariate columns (default: w1,w2)"
    )
    p.add_argument(
        "--z-col",
        default="auto",
        help="treatment status column; 'auto' uses z when present, '' derives it (default: auto)",
    )


def _add_nuisance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--propensity-spec",
        default="1,x,w1,w2",
        help="design terms for the group model (default: 1,x,w1,w2)",
    )
    p.add_argument(
        "--outcome-spec",
        default="1,x,x^2,w1,w2",
        help="design terms for the outcome model (default: 1,x,x^2,w1,w2)",
    )


def _add_bandwidth_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--h", type=float, default=None, help="fixed bandwidth; omit to cross-validate")
    p.add_argument(
        "--h-grid", default=None, help="comma-separated candidate bandwidths for cross-validation"
    )
    p.add_argument(
        "--refine", action="store_true", help="golden-section refinement around the grid minimum"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdmc",
        description="Counterfactual regression curves between two regression-discontinuity cutoffs",
    )
    parser.add_argument("--version", action="version", version=f"rdmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic dataset")
    p_sim.add_argument("--n", type=int, default=2000, help="sample size (default: 2000)")
    p_sim.add_argument("--seed", type=int, required=True, help="random seed")
    p_sim.add_argument("--c0", type=float, default=2.0, help="cutoff of group 0 (default: 2)")
    p_sim.add_argument("--c1", type=float, default=6.0, help="cutoff of group 1 (default: 6)")
    p_sim.add_argument(
        "--x-dist",
        choices=("normal", "lognormal"),
        default="normal",
        help="running-variable distribution (default: normal)",
    )
    p_sim.add_argument("--out", required=True, help="output file")

    p_fit = sub.add_parser("fit", help="estimate a potential-outcome curve")
    _add_data_args(p_fit)
    p_fit.add_argument("--target", choices=("0", "1", "both"), default="both")
    p_fit.add_argument("--method", choices=("naive", "ipw", "dr"), default="dr")
    p_fit.add_argument(
        "--ipw-group", type=int, choices=(0, 1), default=None, help="group the ipw estimator weights"
    )
    _add_nuisance_args(p_fit)
    _add_bandwidth_args(p_fit)
    _add_kernel_grid(p_fit)
    p_fit.add_argument(
        "--with-variance", action="store_true", help="attach the plug-in variance (dr only)"
    )
    p_fit.add_argument("--out", required=True, help="output file")

    p_bw = sub.add_parser("bandwidth", help="cross-validate the bandwidth")
    _add_data_args(p_bw)
    p_bw.add_argument("--target", choices=("0", "1"), required=True)
    p_bw.add_argument("--method", choices=("naive", "ipw", "dr"), default="dr")
    p_bw.add_argument("--ipw-group", type=int, choices=(0, 1), default=None)
    _add_nuisance_args(p_bw)
    p_bw.add_argument("--h-grid", default=None, help="comma-separated candidate bandwidths")
    p_bw.add_argument("--refine", action="store_true")
    p_bw.add_argument(
        "--kernel",
        choices=("epanechnikov", "gaussian", "triangular"),
        default="epanechnikov",
    )
    p_bw.add_argument("--out", default=None, help="score table file (optional)")

    p_eff = sub.add_parser("effect", help="treatment-effect curve with confidence limits")
    _add_data_args(p_eff)
    _add_nuisance_args(p_eff)
    _add_bandwidth_args(p_eff)
    _add_kernel_grid(p_eff)
    p_eff.add_argument("--h0", type=float, default=None, help="bandwidth for g0 (overrides --h)")
    p_eff.add_argument("--h1", type=float, default=None, help="bandwidth for g1 (overrides --h)")
    p_eff.add_argument("--level", type=float, default=0.95, help="confidence level (default: 0.95)")
    p_eff.add_argument("--out", required=True, help="output file")

    p_thr = sub.add_parser("threshold", help="search for the optimal common cutoff")
    _add_data_args(p_thr)
    _add_nuisance_args(p_thr)
    _add_bandwidth_args(p_thr)
    _add_kernel_grid(p_thr)
    p_thr.add_argument("--h0", type=float, default=None)
    p_thr.add_argument("--h1", type=float, default=None)
    cost = p_thr.add_mutually_exclusive_group(required=True)
    cost.add_argument("--mc", type=float, default=None, help="constant marginal treatment cost")
    cost.add_argument("--mc-table", default=None, help="file with x,mc columns")
    p_thr.add_argument(
        "--resolution", type=int, default=1001, help="candidate cutoffs (default: 1001)"
    )
    p_thr.add_argument("--out", default=None, help="profile table file (optional)")

    p_bench = sub.add_parser("bench", help="Monte Carlo benchmark of the estimators")
    p_bench.add_argument("--reps", type=int, default=100, help="replications (default: 100)")
    p_bench.add_argument("--n", type=int, default=2000, help="sample size (default: 2000)")
    p_bench.add_argument("--seed", type=int, required=True, help="base seed")
    p_bench.add_argument(
        "--cells",
        choices=("table1", "table2", "all"),
        default="table1",
        help="which estimator cells to run (default: table1)",
    )
    p_bench.add_argument(
        "--kernel",
        choices=("epanechnikov", "gaussian", "triangular"),
        default="epanechnikov",
    )
    p_bench.add_argument("--grid", type=int, default=201)
    p_bench.add_argument("--out", required=True, help="output file")

    return parser


def parse_invocation(argv=None) -> RunManifest:
    """Turn an argument vector into a resolved, hashable run record."""
    args = _build_parser().parse_args(argv)
    params = {k: v for k, v in vars(args).items() if k not in ("command", "out", "data")}
    inputs = []
    if getattr(args, "data", None):
        params["data"] = args.data
        inputs.append(args.data)
    if getattr(args, "mc_table", None):
        inputs.append(args.mc_table)
    return RunManifest(
        command=args.command,
        parameters=params,
        inputs=tuple(inputs),
        out=getattr(args, "out", None),
    )


def _schema_for(params: dict, data_path: Path) -> ColumnSchema:
    w_cols = tuple(c.strip() for c in params["w_cols"].split(",") if c.strip())
    z_col = params["z_col"]
    if z_col == "auto":
        with data_path.open() as fh:
            for line in fh:
                if line.strip() and not line.startswith("#"):
                    header = [c.strip() for c in line.split(",")]
                    break
            else:
                header = []
        z_col = "z" if "z" in header else None
    elif z_col == "":
        z_col = None
    return ColumnSchema(x=params["x_col"], d=params["d_col"], y=params["y_col"], w=w_cols, z=z_col)


def _load(params: dict):
    data_path = Path(params["data"])
    if not data_path.exists():
        raise DomainError(f"input file not found: {data_path}")
    thresholds = Thresholds(c0=params["c0"], c1=params["c1"])
    ds = load_dataset(data_path, thresholds, _schema_for(params, data_path))
    return ds, thresholds


def _resolve_bandwidth(ds, target, method, params, pfit, ofit, explicit):
    if explicit is not None:
        if not (explicit > 0):
            raise DomainError(f"bandwidth must be positive, got {explicit}")
        return float(explicit), None
    if params.get("h_grid"):
        grid = tuple(float(v) for v in params["h_grid"].split(","))
        search = BandwidthSearch(h_grid=grid, refine=bool(params.get("refine")))
    else:
        search = default_search(ds, target, refine=bool(params.get("refine")))
    sel = select_bandwidth(ds, target, method, search, pfit, ofit, params["kernel"])
    return sel.h, sel


def _fits_for(ds, target, method, params):
    pfit = ofit = None
    if method.kind in ("ipw", "dr"):
        pfit = fit_propensity(ds, FeatureSpec.parse(params["propensity_spec"]))
    if method.kind == "dr":
        ofit = fit_outcome(ds, target, FeatureSpec.parse(params["outcome_spec"]))
    return pfit, ofit


def _run_simulate(manifest: RunManifest, core: dict, digest: str) -> dict:
    p = manifest.parameters
    cfg = SimConfig(n=p["n"], c0=p["c0"], c1=p["c1"], x_dist=p["x_dist"])
    ds = generate(cfg, p["seed"])
    out = Path(manifest.out)
    header_lines = (
        f"rdmc simulate v{__version__}",
        "units: x running variable, w* covariates, d group, z treatment, y outcome",
        f"manifest_sha256: {digest}",
    )
    write_dataset(ds, out, header_lines=header_lines)
    results = {"n": ds.n, "regions": {}}
    from .data import region_census

    results["regions"] = region_census(ds)
    _write_manifest(core, digest, out, results)
    return results


def _run_fit(manifest: RunManifest, core: dict, digest: str) -> dict:
    p = manifest.parameters
    ds, thresholds = _load(p)
    targets = [0, 1] if p["target"] == "both" else [int(p["target"])]
    method = EstimatorMethod(p["method"], p.get("ipw_group"))
    grid = default_grid(thresholds, p["grid"])
    results: dict = {"bandwidths": {}}
    curves = {}
    for j in targets:
        target = TargetOutcome(j)
        pfit, ofit = _fits_for(ds, target, method, p)
        h, _ = _resolve_bandwidth(ds, target, method, p, pfit, ofit, p.get("h"))
        curve = estimate_curve(ds, target, method, h, grid, pfit, ofit, p["kernel"])
        if p.get("with_variance"):
            if method.kind != "dr":
                raise DomainError("--with-variance applies to the dr estimator only")
            density = kde_fit(ds.x)
            curve = curve.with_variance(dr_variance(ds, target, curve, pfit, ofit, density))
        curves[j] = curve
        results["bandwidths"][f"g{j}"] = h
        results[f"diagnostics_g{j}"] = [d.message for d in curve.diagnostics]

    header = ["x"]
    for j in targets:
        header += [f"g{j}hat", f"slope{j}"]
        if curves[j].variance is not None:
            header.append(f"variance{j}")
    rows = []
    for k in range(grid.size):
        row = [_fmt(grid[k])]
        for j in targets:
            row += [_fmt(curves[j].values[k]), _fmt(curves[j].slopes[k])]
            if curves[j].variance is not None:
                row.append(_fmt(curves[j].variance[k]))
        rows.append(row)
    out = Path(manifest.out)
    units = "x in running-variable units; curve values and slopes in outcome units"
    _write_table(out, "fit", digest, units, header, rows)
    _write_manifest(core, digest, out, results)
    return results


def _run_bandwidth(manifest: RunManifest, core: dict, digest: str) -> dict:
    p = manifest.parameters
    ds, _ = _load(p)
    target = TargetOutcome(int(p["target"]))
    method = EstimatorMethod(p["method"], p.get("ipw_group"))
    pfit, ofit = _fits_for(ds, target, method, p)
    h, sel = _resolve_bandwidth(ds, target, method, p, pfit, ofit, None)
    results = {
        "selected_h": h,
        "refined": sel.refined,
        "table": [
            {"h": r.h, "score": r.score, "n_used": r.n_used, "n_excluded": r.n_excluded}
            for r in sel.table
        ],
        "infeasible": [{"h": h_bad, "reason": msg} for h_bad, msg in sel.infeasible],
    }
    if manifest.out:
        out = Path(manifest.out)
        rows = [
            [_fmt(r.h), _fmt(r.score), str(r.n_used), str(r.n_excluded)] for r in sel.table
        ]
        units = "h in running-variable units; score in squared outcome units"
        _write_table(out, "bandwidth", digest, units, ["h", "score", "n_used", "n_excluded"], rows)
        _write_manifest(core, digest, out, results)
    print(f"selected_h={_fmt(h)}")
    return results


def _run_effect(manifest: RunManifest, core: dict, digest: str) -> dict:
    p = manifest.parameters
    ds, thresholds = _load(p)
    method = EstimatorMethod("dr")
    inner = np.linspace(thresholds.c0, thresholds.c1, p["grid"] + 2)[1:-1]
    density = kde_fit(ds.x)
    curves = {}
    results: dict = {"bandwidths": {}}
    for j in (0, 1):
        target = TargetOutcome(j)
        pfit, ofit = _fits_for(ds, target, method, p)
        explicit = p.get(f"h{j}") if p.get(f"h{j}") is not None else p.get("h")
        h, _ = _resolve_bandwidth(ds, target, method, p, pfit, ofit, explicit)
        curve = estimate_curve(ds, target, method, h, inner, pfit, ofit, p["kernel"])
        curve = curve.with_variance(dr_variance(ds, target, curve, pfit, ofit, density))
        curves[j] = curve
        results["bandwidths"][f"g{j}"] = h
    eff = effect_curve(curves[0], curves[1], thresholds, level=p["level"])
    se = np.sqrt(eff.variance)
    rows = [
        [_fmt(eff.grid[k]), _fmt(eff.tau[k]), _fmt(se[k]), _fmt(eff.lower[k]), _fmt(eff.upper[k])]
        for k in range(eff.grid.size)
    ]
    out = Path(manifest.out)
    units = "x in running-variable units; tau, se and limits in outcome units"
    _write_table(out, "effect", digest, units, ["x", "tau", "se", "lower", "upper"], rows)
    results["level"] = p["level"]
    _write_manifest(core, digest, out, results)
    return results


def _run_threshold(manifest: RunManifest, core: dict, digest: str) -> dict:
    p = manifest.parameters
    ds, thresholds = _load(p)
    method = EstimatorMethod("dr")
    grid = default_grid(thresholds, p["grid"])
    density = kde_fit(ds.x)
    curves = {}
    results: dict = {"bandwidths": {}}
    for j in (0, 1):
        target = TargetOutcome(j)
        pfit, ofit = _fits_for(ds, target, method, p)
        explicit = p.get(f"h{j}") if p.get(f"h{j}") is not None else p.get("h")
        h, _ = _resolve_bandwidth(ds, target, method, p, pfit, ofit, explicit)
        curves[j] = estimate_curve(ds, target, method, h, grid, pfit, ofit, p["kernel"])
        results["bandwidths"][f"g{j}"] = h
    if p.get("mc") is not None:
        cost = CostSpec(constant=p["mc"])
    else:
        table = np.loadtxt(p["mc_table"], delimiter=",", skiprows=1, comments="#", ndmin=2)
        cost = CostSpec(table_x=table[:, 0], table_mc=table[:, 1])
    res = optimize_threshold(curves[0], curves[1], cost, density, thresholds, p["resolution"])
    results.update({"c_opt": res.c_opt, "value": res.value, "boundary": res.boundary})
    if manifest.out:
        out = Path(manifest.out)
        rows = [
            [_fmt(res.candidates[k]), _fmt(res.values[k])] for k in range(res.candidates.size)
        ]
        units = "candidate cutoff in running-variable units; value in outcome units"
        _write_table(out, "threshold", digest, units, ["c", "net_benefit"], rows)
        _write_manifest(core, digest, out, results)
    print(f"c_opt={_fmt(res.c_opt)} value={_fmt(res.value)} boundary={res.boundary}")
    return results


def _run_bench(manifest: RunManifest, core: dict, digest: str) -> dict:
    p = manifest.parameters
    cfg = SimConfig(n=p["n"])
    if p["cells"] == "table1":
        cells = table1_cells()
    elif p["cells"] == "table2":
        cells = table2_cells()
    else:
        cells = table1_cells() + table2_cells()
    report = run_benchmark(cfg, p["reps"], p["seed"], cells, grid_size=p["grid"], kernel=p["kernel"])
    rows = []
    for c in report.cells:
        nuisance = c.label.split(":", 2)[2] if c.label.count(":") >= 2 else "correct"
        rows.append(
            [c.label, c.estimator, nuisance, str(c.target), _fmt(c.mise), str(c.n_reps),
             str(c.n_failed), str(p["seed"])]
        )
    out = Path(manifest.out)
    units = "mise in squared outcome units, density-weighted over [c0, c1]"
    _write_table(
        out, "bench", digest, units,
        ["label", "estimator", "nuisance", "target", "mise", "n_reps", "n_failed", "base_seed"],
        rows,
    )
    results = {
        "degraded": report.degraded,
        "cells": {c.label: c.mise for c in report.cells},
    }
    _write_manifest(core, digest, out, results)
    if report.degraded:
        print("warning: report degraded (a cell failed in more than 10% of replications)")
    return results


_RUNNERS = {
    "simulate": _run_simulate,
    "fit": _run_fit,
    "bandwidth": _run_bandwidth,
    "effect": _run_effect,
    "threshold": _run_threshold,
    "bench": _run_bench,
}


def execute(manifest: RunManifest) -> dict:
    """Run a parsed invocation; returns the result summary the sidecar records."""
    core = manifest_core(manifest)
    digest = manifest_hash(core)
    return _RUNNERS[manifest.command](manifest, core, digest)


def main(argv=None) -> int:
    try:
        manifest = parse_invocation(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        execute(manifest)
    except RdmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
