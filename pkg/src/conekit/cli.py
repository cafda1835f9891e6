"""Command line front end: configuration loading, dispatch to the modules
and JSON/CSV report emission with reproducibility metadata.

Exit codes: 0 success (including reported non-convergence of a flow),
2 numerical failure, 3 invalid configuration.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import elliptic, he_flow, invariants, ruled
from .parabolic_bundles import stability_check, parabolic_degree, parabolic_slope
from .serialization import (bundle_from_config, load_config,
                            metric_from_config, read_grid_csv,
                            surface_from_config, write_grid_csv, write_report)

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3


def _digest(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _load(args):
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    return cfg


def _sidecar(path, suffix):
    base, _ = os.path.splitext(path)
    return f"{base}_{suffix}.csv"


def cmd_geometry(args):
    cfg = _load(args)
    try:
        metric = metric_from_config(cfg["metric"])
    except (KeyError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    S, mask = metric.scalar_curvature()
    payload = {
        "command": "geometry",
        "kind": metric.kind,
        "total_volume": metric.total_volume,
        "quasi_isometry_Q": metric.Q,
        "christoffel_profile": metric.christoffel_profile(),
        "ricci_sup_masked": metric.ricci_sup(),
        "scalar_mean": float(np.sum(metric.vol * S) / metric.total_volume),
        "grid": {"n_nodes": metric.grid.n_nodes,
                 "n_theta": metric.grid.n_theta},
    }
    write_report(args.out, payload, _digest(cfg), args.seed)
    write_grid_csv(_sidecar(args.out, "scalar_curvature"), metric.grid, S)
    return EXIT_OK


def cmd_solve(args):
    cfg = _load(args)
    try:
        metric = metric_from_config(cfg["metric"])
        rhs = read_grid_csv(args.rhs, metric.grid) if args.rhs else None
        if rhs is None:
            rhs = np.zeros(metric.grid.n_nodes)
    except (KeyError, ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rhs = metric.mean_zero(rhs)
    try:
        if args.op == "laplace":
            rep = elliptic.solve_laplace(metric, rhs)
        elif args.op == "bilap":
            c_p = elliptic.poincare_constant(metric)
            K = args.K if args.K is not None else c_p + 1.1
            rep = elliptic.solve_k_bilaplacian(metric, K, rhs, c_p=c_p)
        elif args.op == "lich":
            lich = elliptic.assemble_lichnerowicz(metric)
            out = lich.apply(rhs)
            write_report(args.out, {"command": "solve", "op": "lich",
                                    "applied": True}, _digest(cfg), args.seed)
            write_grid_csv(_sidecar(args.out, "lich_apply"), metric.grid, out)
            return EXIT_OK
        else:
            rep = elliptic.fredholm_solve(metric, rhs)
    except (elliptic.CoercivityError, elliptic.IncompatibleDataError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except elliptic.NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    payload = {"command": "solve", "op": args.op}
    payload.update(rep.as_dict())
    write_report(args.out, payload, _digest(cfg), args.seed)
    write_grid_csv(_sidecar(args.out, "solution"), metric.grid, rep.solution)
    for k, vec in enumerate(rep.kernel_basis):
        write_grid_csv(_sidecar(args.out, f"kernel{k}"), metric.grid, vec)
    return EXIT_OK


def cmd_stability(args):
    cfg = _load(args)
    try:
        bundle = bundle_from_config(cfg["bundle"])
        verdict = stability_check(bundle)
    except (KeyError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    payload = {"command": "stability",
               "parabolic_degree": str(parabolic_degree(bundle)),
               "parabolic_slope": str(parabolic_slope(bundle))}
    payload.update(verdict.as_dict())
    write_report(args.out, payload, _digest(cfg), args.seed)
    return EXIT_OK


def cmd_flow(args):
    cfg = _load(args)
    try:
        metric = metric_from_config(cfg["metric"])
        bundle = bundle_from_config(cfg["bundle"])
    except (KeyError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    kwargs = cfg.get("flow", {})
    rep = he_flow.flow_run(bundle, metric, tol=args.tol, **kwargs)
    payload = {"command": "flow"}
    payload.update(rep.as_dict())
    # non-convergence is a result, not an error
    write_report(args.out, payload, _digest(cfg), args.seed)
    final = rep.final.H.reshape(metric.grid.n_nodes, -1)
    write_grid_csv(_sidecar(args.out, "h_final_re"), metric.grid, final.real)
    write_grid_csv(_sidecar(args.out, "h_final_im"), metric.grid, final.imag)
    return EXIT_OK


def cmd_ruled(args):
    cfg = _load(args)
    try:
        metric = metric_from_config(cfg["metric"])
        bundle = bundle_from_config(cfg["bundle"])
    except (KeyError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    H_fn = he_flow.model_metric_fn(bundle, metric.surface)
    k_ladder = [int(k) for k in args.k_ladder.split(",")]
    sample = ruled.RuledPoint(0.4 + 0.2j, [1.0, 0.3 - 0.2j])
    if args.cmd == "expansion":
        rows = []
        for k in k_ladder:
            am = ruled.AdiabaticMetric(k, metric, H_fn, rank=bundle.rank)
            s_val, err = ruled.scalar_curvature_at(am, sample)
            s0, s1 = ruled.expansion_terms(metric, H_fn, sample, rank=bundle.rank)
            rows.append({"k": k, "S": s_val, "stencil_error": err,
                         "S0": s0, "S1": s1,
                         "residual_after_S1": s_val - s0 - s1 / k})
        payload = {"command": "ruled", "cmd": "expansion", "ladder": rows}
    else:
        h0 = he_flow.build_model_metric(bundle, metric)
        out = ruled.approx_cscK_step(metric, h0, H_fn=H_fn, k_ladder=k_ladder)
        payload = {"command": "ruled", "cmd": "correct",
                   "first_order_deviation": out["first_order_deviation"],
                   "first_order_deviation_corrected":
                       out["first_order_deviation_corrected"],
                   "kernel_obstruction": out["kernel_obstruction"],
                   "fredholm_branch": out["fredholm_branch"],
                   "residual_decay": out["residual_decay"]}
    write_report(args.out, payload, _digest(cfg), args.seed)
    return EXIT_OK


def cmd_invariants(args):
    cfg = _load(args)
    try:
        metric = metric_from_config(cfg["metric"])
    except (KeyError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cd = invariants.KahlerClassData.of_metric(metric)
    payload = {"command": "invariants", "class_data": cd.as_dict()}
    if args.cmd in ("avg", "both"):
        payload["average_scalar"] = invariants.average_scalar(cd)
    if args.cmd in ("futaki", "both"):
        try:
            fut = invariants.log_futaki(metric, field=args.field)
        except invariants.InvalidFieldError as exc:
            print(f"invalid configuration: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        payload["log_futaki"] = fut
    write_report(args.out, payload, _digest(cfg), args.seed)
    return EXIT_OK


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="conekit",
        description="numerical conical Kahler geometry on marked spheres")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int,
                    default=int(os.environ.get("CONEKIT_THREADS", "1")))
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="build a metric and report its data")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("solve", help="elliptic solves on a cone metric")
    p.add_argument("--op", choices=["laplace", "bilap", "lich", "fredholm"],
                   required=True)
    p.add_argument("--config", required=True, help="config with a metric section")
    p.add_argument("--metric", dest="config_alias", default=None,
                   help="alias for --config")
    p.add_argument("--rhs", default=None, help="CSV grid function")
    p.add_argument("--K", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("stability", help="parabolic stability verdict")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("flow", help="Hermitian-Einstein heat flow")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("ruled", help="adiabatic expansion / corrective step")
    p.add_argument("--cmd", choices=["expansion", "correct"], required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--k-ladder", default="8,16,32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ruled)

    p = sub.add_parser("invariants", help="average scalar and log-Futaki")
    p.add_argument("--cmd", choices=["avg", "futaki", "both"], default="both")
    p.add_argument("--config", required=True)
    p.add_argument("--field", default="z_dz")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_invariants)

    args = ap.parse_args(argv)
    if args.threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code
    except MemoryError:
        print("numerical failure: out of memory", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
