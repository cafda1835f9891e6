"""Config schema, CSV grid functions and JSON reports.

Surfaces, metrics and bundles are described by a structured JSON config;
grid functions travel as CSV with an 8-line self-describing header.
Reports are JSON with deterministic key order; the timestamp field is the
only run-to-run variation for fixed inputs.
"""

import json
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np

from .cone_geometry import ConeSurface, build_metric
from .parabolic_bundles import ParabolicBundle

__all__ = [
    "load_config",
    "surface_from_config",
    "metric_from_config",
    "bundle_from_config",
    "write_grid_csv",
    "read_grid_csv",
    "write_report",
]


def load_config(path):
    with open(path) as fh:
        return json.load(fh)


def _parse_point(p):
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity", "oo"):
            return np.inf
        return complex(p.replace(" ", ""))
    if isinstance(p, (list, tuple)):
        return complex(p[0], p[1])
    return complex(p)


def surface_from_config(cfg):
    """Surface section schema:

    {"cone_points": [["0", 0.3], ["inf", 0.3]],   # (chart centre, angle)
     "n_rho": 64, "n_theta": 128,
     "interface_radius": null}
    """
    pts = cfg.get("cone_points", [])
    points = [_parse_point(p) for p, _ in pts]
    angles = [float(b) for _, b in pts]
    return ConeSurface(points, angles,
                       n_rho=int(cfg.get("n_rho", 64)),
                       n_theta=int(cfg.get("n_theta", 128)),
                       interface_radius=cfg.get("interface_radius"))


def metric_from_config(cfg):
    """Metric section schema:

    {"surface": {...}, "kind": "football" | "model" | "explicit",
     "delta": null, "potential_csv": null}
    """
    surface = surface_from_config(cfg["surface"])
    kind = cfg.get("kind", "football")
    phi = None
    if cfg.get("potential_csv"):
        phi = read_grid_csv(cfg["potential_csv"], surface.grid())
    return build_metric(surface, kind, phi=phi, delta=cfg.get("delta"))


def bundle_from_config(cfg):
    """Bundle section schema:

    {"degrees": [0, 0],
     "points": [{"point": "0", "flags": [[["1", "0"]]],
                 "weights": ["0", "1/2"]}, ...]}

    Flag vectors and weights are exact strings (Fractions / Gaussian
    rationals).
    """
    degrees = cfg["degrees"]
    points, flags, weights = [], [], []
    for entry in cfg.get("points", []):
        points.append(_parse_point(entry["point"]))
        steps = []
        for step in entry.get("flags", []):
            steps.append([tuple(_parse_rational(x) for x in vec)
                          for vec in step])
        flags.append(steps)
        weights.append([Fraction(w) for w in entry["weights"]])
    return ParabolicBundle(degrees, points, flags, weights)


def _parse_rational(x):
    if isinstance(x, str):
        if "/" in x or x.lstrip("+-").isdigit():
            return Fraction(x)
        return complex(x)
    return x


CSV_HEADER_LINES = 8


def write_grid_csv(path, grid, values, name="value"):
    """Grid function as CSV: node index, cap, z (re, im), value column(s),
    behind an 8-line self-describing header."""
    values = np.asarray(values)
    cols = "index,cap,i,j,re_z,im_z," + (
        name if values.ndim == 1 else
        ",".join(f"{name}{k}" for k in range(values.shape[1])))
    with open(path, "w") as fh:
        fh.write("# conekit grid function v1\n")
        fh.write(f"# nodes: {grid.n_nodes}\n")
        fh.write(f"# caps: beta0={grid.caps[0].beta} beta_inf={grid.caps[1].beta}\n")
        fh.write(f"# n_rho: {grid.caps[0].n_rho}  n_theta: {grid.n_theta}\n")
        fh.write(f"# interface_radius: {grid.interface_radius!r}\n")
        fh.write("# layout: cap-0 nodes first, row-major (i_rho, j_theta)\n")
        fh.write("# z is the global affine chart coordinate\n")
        fh.write(f"# columns: {cols}\n")
        for n in range(grid.n_nodes):
            row = [str(n), str(grid.cap_id[n]), str(grid.i_idx[n]),
                   str(grid.j_idx[n]),
                   repr(float(np.real(grid.z[n]))),
                   repr(float(np.imag(grid.z[n])))]
            if values.ndim == 1:
                row.append(repr(float(values[n])))
            else:
                row.extend(repr(float(v)) for v in values[n])
            fh.write(",".join(row) + "\n")


def read_grid_csv(path, grid=None):
    rows = []
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for ln in lines:
        parts = ln.strip().split(",")
        rows.append([float(x) for x in parts[6:]])
    arr = np.asarray(rows)
    if arr.shape[1] == 1:
        arr = arr[:, 0]
    if grid is not None and len(arr) != grid.n_nodes:
        raise ValueError(
            f"grid function has {len(arr)} nodes, expected {grid.n_nodes}")
    return arr


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_report(path, payload, config_digest=None, seed=None):
    """Deterministic JSON report: sorted keys, repr-stable floats; the
    timestamp is the only field allowed to vary between identical runs."""
    body = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config_digest": config_digest,
        "seed": seed,
    }
    body.update(_jsonify(payload))
    with open(path, "w") as fh:
        json.dump(body, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return body
