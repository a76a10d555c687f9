"""Command-line interface: ``bdd <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings

import numpy as np

from . import __version__
from .basis import MultiIndex, KernelSpec
from .data import load_boundary, load_dataset, load_points
from .errors import BddError, ConfigError
from .geometry import MetricSpec, detect_kinks, grid_from_points, make_grid
from .pipeline import BandwidthPolicy, EstimatorConfig, add_bands, check_kinks, choose_bandwidth, estimate_curve
from .serialize import dumps_json, fmt_real, write_text
from .sim import (
    ExperimentConfig,
    QuadratureSpec,
    load_experiment_config,
    mc_experiment,
    population_bias_kink,
    population_bias_slope,
)


class _Parser(argparse.ArgumentParser):
    """argparse with configuration errors mapped to exit code 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _reals(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _weights(text: str) -> MetricSpec:
    vals = _reals(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("metric weights take two values w1,w2")
    return MetricSpec(tuple(vals))


def _estimation_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--data", required=True, help="CSV with columns x1,x2,y and optional t")
    sp.add_argument("--boundary", required=True, help="CSV of boundary vertices x1,x2 in traversal order")
    sp.add_argument("--grid", help="CSV of evaluation points x1,x2 on the boundary")
    sp.add_argument("--grid-size", type=int, default=40)
    sp.add_argument("--include-vertices", action="store_true", help="snap boundary vertices into the grid")
    sp.add_argument("--method", choices=("biv", "dist"), default="biv")
    sp.add_argument("--p", type=int, default=1)
    sp.add_argument("--nu", type=MultiIndex.parse, default=MultiIndex(0, 0), help="derivative multi-index k1,k2")
    sp.add_argument("--kernel", default="triangular", help="uniform, triangular or epanechnikov")
    sp.add_argument("--kernel-shape", choices=("product", "radial"), default="product")
    sp.add_argument("--metric-weights", type=_weights, default=MetricSpec())
    sp.add_argument("--bw", type=BandwidthPolicy.parse, default=None,
                    help="value:<h> | mse | imse | rot-est-kink[:c] | rot-inf-kink[:c] | rot-smooth[:c]")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rbc", action="store_true", help="robust bias-corrected inference")
    sp.add_argument("--smooth-boundary", action="store_true", help="assert the boundary has no kinks")
    sp.add_argument("--allow-t-override", action="store_true")
    sp.add_argument("--no-standardize", action="store_true")
    sp.add_argument("--kink-tol", type=float, default=15.0, help="kink angle tolerance in degrees")
    sp.add_argument("--rank-tol", type=float, default=1e-10)
    sp.add_argument("--out", default="-", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bdd", description="Treatment effect curves along an assignment boundary.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("estimate", help="pointwise estimates and confidence intervals")
    _estimation_args(sp)
    sp = sub.add_parser("bands", help="estimates plus a uniform confidence band")
    _estimation_args(sp)
    sp.add_argument("--draws", type=int, default=3000)
    sp = sub.add_parser("bw", help="bandwidth selection only")
    _estimation_args(sp)

    sp = sub.add_parser("simulate", help="Monte Carlo experiment")
    sp.add_argument("--config", help="JSON experiment config")
    for name, typ in (("dgp", str), ("n", int), ("reps", int), ("seed", int), ("method", str), ("p", int),
                      ("kernel", str), ("shape", str), ("bandwidth", str), ("alpha", float),
                      ("grid-size", int), ("draws", int)):
        sp.add_argument(f"--{name}", type=typ, default=None)
    sp.add_argument("--bands", action="store_true", default=None)
    sp.add_argument("--rbc", action="store_true", default=None)
    sp.add_argument("--out", default=None, help="output prefix; writes PREFIX.csv and PREFIX.json")

    sp = sub.add_parser("oracle-bias", help="population kink bias of the distance estimator")
    sp.add_argument("--h", type=_reals, default=[1.0])
    sp.add_argument("--s", type=_reals, default=[0.0])
    sp.add_argument("--p", type=int, default=1)
    sp.add_argument("--kernel", default="triangular")
    sp.add_argument("--radial-nodes", type=int, default=2000)
    sp.add_argument("--angular-nodes", type=int, default=2000)
    sp.add_argument("--angular", choices=("exact", "trapezoid"), default="exact")
    sp.add_argument("--slope", action="store_true", help="report the derivative in s at the kink instead")
    sp.add_argument("--step", type=float, default=1e-4)
    sp.add_argument("--out", default="-")

    sp = sub.add_parser("kinks", help="list boundary kinks")
    sp.add_argument("--boundary", required=True)
    sp.add_argument("--tol", type=float, default=15.0)
    sp.add_argument("--out", default="-")
    return ap


def _config(a) -> EstimatorConfig:
    return EstimatorConfig(
        method=a.method, p=a.p, nu=a.nu, kernel=a.kernel, shape=a.kernel_shape,
        metric=a.metric_weights, bandwidth=a.bw, alpha=a.alpha, rbc=a.rbc,
        smooth_boundary=a.smooth_boundary, rank_tol=a.rank_tol,
    )


def _load(a):
    cfg = _config(a)
    boundary = load_boundary(a.boundary)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        data = load_dataset(a.data, boundary, not a.no_standardize, a.allow_t_override)
    notes = [str(w.message) for w in caught]
    if a.grid:
        grid = grid_from_points(load_points(a.grid), boundary)
    else:
        grid = make_grid(boundary, a.grid_size, a.include_vertices)
    return cfg, boundary, data, grid, notes


def _record(pt, method: str) -> dict:
    return {
        "index": pt.index,
        "x1": float(pt.x_raw[0]),
        "x2": float(pt.x_raw[1]),
        "tau_hat": pt.tau_hat,
        "se": pt.se,
        "ci_low": pt.ci_low,
        "ci_high": pt.ci_high,
        "h_used": pt.h_raw,
        "n_eff0": pt.n_eff0,
        "n_eff1": pt.n_eff1,
        "method": method,
        "status": pt.status,
    }


def _selections(choice, scale: float) -> list[dict]:
    return [
        {"h": s.value * scale, "method": s.method.value, "diagnostics": s.diagnostics}
        for s in choice.selection
    ]


def cmd_estimate(a, bands: bool) -> int:
    cfg, boundary, data, grid, notes = _load(a)
    notes += check_kinks(cfg, boundary, a.kink_tol, bands)
    res = estimate_curve(data, grid, cfg)
    if bands:
        add_bands(res, a.alpha, a.draws, a.seed)
    recs = []
    for pt in res.points:
        r = _record(pt, cfg.method)
        if cfg.rbc:
            r["tau_rbc"] = pt.tau_rbc
        if bands:
            r["q_alpha"] = res.band.q_alpha
            r["band_low"] = pt.band_low
            r["band_high"] = pt.band_high
        recs.append(r)
    warn = notes + res.warnings
    out = {"command": "bands" if bands else "estimate", "records": recs,
           "bandwidth": _selections(res.bandwidth, data.length_scale), "warnings": warn}
    if bands:
        out["band"] = {"alpha": a.alpha, "q_alpha": res.band.q_alpha, "draws": a.draws, "seed": a.seed}
    for w in warn:
        print(f"warning: {w}", file=sys.stderr)
    write_text(a.out, dumps_json(out))
    return 0


def cmd_bw(a) -> int:
    cfg, boundary, data, grid, notes = _load(a)
    choice = choose_bandwidth(data, grid, cfg)
    per_point = [
        {"index": m, "x1": float(grid.points[m, 0]), "x2": float(grid.points[m, 1]), "h": float(choice.h[m] * data.length_scale)}
        for m in range(grid.size)
    ]
    out = {"command": "bw", "policy": str(cfg.bandwidth), "selections": _selections(choice, data.length_scale),
           "grid": per_point, "warnings": notes + choice.notes}
    write_text(a.out, dumps_json(out))
    return 0


def cmd_simulate(a) -> int:
    base = load_experiment_config(a.config).to_mapping() if a.config else ExperimentConfig().to_mapping()
    for key in ("dgp", "n", "reps", "seed", "method", "p", "kernel", "shape", "bandwidth", "alpha", "draws", "bands", "rbc"):
        v = getattr(a, key)
        if v is not None:
            base[key] = v
    if a.grid_size is not None:
        base["grid_size"] = a.grid_size
    summary = mc_experiment(ExperimentConfig.from_mapping(base))
    if a.out is None:
        write_text("-", summary.to_json())
    else:
        write_text(a.out + ".csv", summary.to_csv())
        write_text(a.out + ".json", summary.to_json())
    return 0


def cmd_oracle(a) -> int:
    quad = QuadratureSpec(a.radial_nodes, a.angular_nodes, a.angular)
    kern = KernelSpec(a.kernel, dimension="uni")
    lines = []
    if a.slope:
        lines.append("h,step,slope")
        for h in a.h:
            lines.append(",".join(fmt_real(v) for v in (h, a.step, population_bias_slope(h, a.step, a.p, kern, quad))))
    else:
        lines.append("h,s,bias")
        for h in a.h:
            for s in a.s:
                lines.append(",".join(fmt_real(v) for v in (h, s, population_bias_kink(h, s, a.p, kern, quad))))
    write_text(a.out, "\n".join(lines) + "\n")
    return 0


def cmd_kinks(a) -> int:
    boundary = load_boundary(a.boundary)
    v = boundary.vertices
    rows = [
        {"index": k.index, "x1": float(v[k.index, 0]), "x2": float(v[k.index, 1]),
         "turn_angle": k.turn_angle, "interior_angle": k.interior_angle}
        for k in detect_kinks(boundary, a.tol)
    ]
    write_text(a.out, dumps_json({"command": "kinks", "tol": a.tol, "kinks": rows}))
    return 0


def run_command(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the process exit code."""
    try:
        a = build_parser().parse_args(argv)
        if a.command in ("estimate", "bands"):
            return cmd_estimate(a, a.command == "bands")
        if a.command == "bw":
            return cmd_bw(a)
        if a.command == "simulate":
            return cmd_simulate(a)
        if a.command == "oracle-bias":
            return cmd_oracle(a)
        return cmd_kinks(a)
    except BddError as exc:
        print(f"bdd: error: {exc}", file=sys.stderr)
        return exc.exit_code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
