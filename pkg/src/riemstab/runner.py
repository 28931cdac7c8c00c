"""Runs one configured experiment and writes its CSV, plot script and manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    bifurcation_diagram,
    contractivity_sweep,
    estimate_bound_constants,
    global_error_study,
    karcher_mean,
    region_chart,
)
from .config import ExperimentConfig, array, number
from .errors import ConvergenceError
from .fields import KarcherFieldSpec, box_sampler, estimate_nu, geodesic_ball_sampler
from .geometry import chart_bundle
from .integrators import IntegrationError

HEADERS = {
    "sweep": ["method", "h", "d0", "d_after", "converged", "iters_x", "iters_y"],
    "bifurcation": ["h", "root_index", "z"],
    "global-error": ["method", "h", "k", "error", "bound", "nu", "C", "p"],
    "isotropy": ["c", "h", "d0", "d_after"],
    "karcher": ["i", "j", "value"],
}
CSV_NAMES = {
    "sweep": "sweep.csv",
    "bifurcation": "bifurcation.csv",
    "global-error": "global_error.csv",
    "lognorm": "lognorm.csv",
    "isotropy": "isotropy.csv",
    "karcher": "karcher.csv",
}


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return "nan"
    return str(value)


@dataclass
class ExperimentResult:
    header: list
    rows: list
    failures: int = 0
    summary: dict = dc_field(default_factory=dict)
    error: str = ""


def run_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    rows, failures = [], 0
    for method in cfg.methods:
        for rec in contractivity_sweep(method, cfg.field, cfg.x0, cfg.y0, cfg.h_grid, cfg.solver):
            failures += not rec.converged
            rows.append([rec.method, rec.h, rec.d0, rec.d_after, rec.converged, rec.iters_x, rec.iters_y])
    return ExperimentResult(HEADERS["sweep"], rows, failures)


def run_isotropy(cfg: ExperimentConfig) -> ExperimentResult:
    rows, failures = [], 0
    for method in cfg.methods:
        for rec in contractivity_sweep(method, cfg.field, cfg.x0, cfg.y0, cfg.h_grid, cfg.solver):
            failures += not rec.converged
            rows.append([method.c, rec.h, rec.d0, rec.d_after])
    return ExperimentResult(HEADERS["isotropy"], rows, failures)


def run_bifurcation(cfg: ExperimentConfig) -> ExperimentResult:
    diagram = bifurcation_diagram(number(cfg.raw["z0"]), cfg.h_grid)
    rows = [[h, i, z] for h, roots in zip(diagram.h_grid, diagram.roots) for i, z in enumerate(roots)]
    return ExperimentResult(HEADERS["bifurcation"], rows,
                            summary={"max_root_count": max(diagram.counts)})


def run_global_error(cfg: ExperimentConfig) -> ExperimentResult:
    t_star = number(cfg.raw["t_star"])
    fine_tol = number(cfg.get("fine_tol"))
    bound = cfg.raw.get("bound", {})
    rows, summary = [], {}
    for method in cfg.methods:
        p = int(bound.get("p", method.order))
        if "nu" in bound and "C" in bound:
            nu, C = number(bound["nu"]), number(bound["C"])
        else:
            nu, C, _ = estimate_bound_constants(
                method, cfg.field, cfg.x0, t_star, cfg.h_grid,
                n_samples=int(cfg.get("region.n_samples")), seed=cfg.seed,
                margin=number(cfg.get("region.margin")), fine_tol=fine_tol, cfg=cfg.solver)
            nu = number(bound.get("nu", nu))
            C = number(bound.get("C", C))
        try:
            rep = global_error_study(method, cfg.field, cfg.x0, t_star, cfg.h_grid, nu, C, p,
                                     fine_tol=fine_tol, cfg=cfg.solver)
        except IntegrationError as exc:
            return ExperimentResult(HEADERS["global-error"], rows, 1, summary, str(exc))
        for h, k, e, b in zip(rep.h_grid, rep.steps, rep.measured_errors, rep.bound_values):
            rows.append([str(method), h, k, e, b, nu, C, p])
        summary[str(method)] = {"order_estimate": rep.order_estimate, "bound_holds": rep.bound_holds}
    return ExperimentResult(HEADERS["global-error"], rows, 0, summary)


def run_lognorm(cfg: ExperimentConfig) -> ExperimentResult:
    region = cfg.raw["region"]
    kind = region.get("kind", "box")
    m = cfg.manifold
    n = int(cfg.get("region.n_samples"))
    if kind == "box":
        chart = chart_bundle(m)
        sampler = box_sampler(array(region["lo"]), array(region["hi"]))
    elif kind == "ball":
        center = m.check_point(m.project(array(region["center"])))
        chart = region_chart(m, center)
        sampler = geodesic_ball_sampler(m, chart, center, number(region["radius"]))
    else:
        from .config import ConfigError
        raise ConfigError(f"region.kind must be 'box' or 'ball', got {kind!r}")
    est = estimate_nu(cfg.field, chart, sampler, n, cfg.seed)
    header = [f"x{i}" for i in range(chart.dim)] + ["mu"]
    rows = [list(x) + [mu] for x, mu in est.samples]
    return ExperimentResult(header, rows, summary={"nu": est.nu})


def run_karcher(cfg: ExperimentConfig) -> ExperimentResult:
    spec = KarcherFieldSpec(tuple(np.asarray(Y) for Y in cfg.field.params["targets"]),
                            tuple(cfg.field.params["weights"]))
    tol = number(cfg.get("karcher.tol"))
    try:
        X = karcher_mean(spec, tol, cfg=cfg.solver)
    except ConvergenceError as exc:
        return ExperimentResult(HEADERS["karcher"], [], 1, error=str(exc))
    rows = [[i, j, X[i, j]] for i in range(X.shape[0]) for j in range(X.shape[1])]
    norm = cfg.field.manifold.norm(X, cfg.field(X))
    return ExperimentResult(HEADERS["karcher"], rows, summary={"field_norm": norm})


RUNNERS = {
    "sweep": run_sweep,
    "bifurcation": run_bifurcation,
    "global-error": run_global_error,
    "lognorm": run_lognorm,
    "isotropy": run_isotropy,
    "karcher": run_karcher,
}


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


PLOT_TEMPLATES = {
    "sweep": '''
groups = {}
for r in rows:
    groups.setdefault(r["method"], []).append(r)
for method, rs in groups.items():
    plt.plot([float(r["h"]) for r in rs], [float(r["d_after"]) for r in rs], label=method)
plt.axhline(float(rows[0]["d0"]), color="k", ls="--", lw=0.8, label="d0")
plt.xlabel("h")
plt.ylabel("distance after one step")
plt.legend()
''',
    "isotropy": '''
groups = {}
for r in rows:
    groups.setdefault(r["c"], []).append(r)
for c, rs in groups.items():
    plt.plot([float(r["h"]) for r in rs], [float(r["d_after"]) for r in rs], label=f"c = {c}")
plt.xlabel("h")
plt.ylabel("distance after one step")
plt.legend()
''',
    "bifurcation": '''
plt.plot([float(r["h"]) for r in rows], [float(r["z"]) for r in rows], ".", ms=1.5)
plt.xlabel("h")
plt.ylabel("z")
''',
    "global-error": '''
groups = {}
for r in rows:
    groups.setdefault(r["method"], []).append(r)
for method, rs in groups.items():
    hs = [float(r["h"]) for r in rs]
    plt.loglog(hs, [float(r["error"]) for r in rs], "o-", label=f"{method} error")
    plt.loglog(hs, [float(r["bound"]) for r in rs], "--", label=f"{method} bound")
plt.xlabel("h")
plt.ylabel("global error")
plt.legend()
''',
    "lognorm": '''
keys = [k for k in rows[0] if k != "mu"]
if len(keys) == 2:
    sc = plt.scatter([float(r[keys[0]]) for r in rows], [float(r[keys[1]]) for r in rows],
                     c=[float(r["mu"]) for r in rows], s=6)
    plt.colorbar(sc, label="mu")
else:
    plt.hist([float(r["mu"]) for r in rows], bins=40)
    plt.xlabel("mu")
''',
    "karcher": '''
n = int(max(int(r["i"]) for r in rows)) + 1
M = [[0.0] * n for _ in range(n)]
for r in rows:
    M[int(r["i"])][int(r["j"])] = float(r["value"])
plt.imshow(M)
plt.colorbar()
''',
}


def plot_script(kind: str, csv_name: str) -> str:
    return f'''"""Plot {csv_name}. Run from the directory that holds the CSV."""
import csv

import matplotlib.pyplot as plt

with open("{csv_name}", newline="") as fh:
    rows = list(csv.DictReader(fh))
{PLOT_TEMPLATES[kind]}
plt.tight_layout()
plt.savefig("{csv_name.replace('.csv', '.png')}", dpi=150)
'''


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_and_write(cfg: ExperimentConfig, out_dir: Path) -> ExperimentResult:
    """Compute everything, then write CSV, plot script and manifest into ``out_dir``."""
    t0 = time.perf_counter()
    result = RUNNERS[cfg.kind](cfg)
    elapsed = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_name = CSV_NAMES[cfg.kind]
    files = {
        csv_name: csv_text(result.header, result.rows),
        f"plot_{csv_name.replace('.csv', '.py')}": plot_script(cfg.kind, csv_name),
    }
    for name, text in files.items():
        (out_dir / name).write_text(text)
    manifest = {
        "tool": "riemstab",
        "version": __version__,
        "python": platform.python_version(),
        "experiment": cfg.kind,
        "config": cfg.resolved(),
        "files": {name: _sha256(out_dir / name) for name in files},
        "timings": {"compute_seconds": elapsed},
        "rows": len(result.rows),
        "failures": result.failures,
        "summary": result.summary,
        "error": result.error,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return result


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")
