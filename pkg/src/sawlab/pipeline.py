"""Run orchestration: grid cells, append-only persistence, resume and report.

A run directory holds ``manifest.json`` (config, its hash, tool version) and
``cells.jsonl`` with one line per finished (d, n, beta) cell.  Lines are only
ever appended; resume recomputes the cells that have no line yet.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .charts import moment_chart
from .cones import (ConeParams, assign_cones, build_test_set, classify_lines,
                    condition_d_check, cone_process_distance, estimate_ax,
                    palm_line_probability, shape_csv, shape_of)
from .config import ExperimentConfig, config_from_hashed, config_hash
from .errors import CorruptState, EmptyClass, InsufficientData, RunIOError
from .exact import enumerate_ensemble
from .exponents import (MomentRow, MomentSeries, exponent_row, exponents_csv,
                        fit_exponent, theorem_report)
from .mcmc import ChainConfig, chain_seed, sample_paths, sample_saw_pivot, sample_weakly_saw
from .walk import LatticePath, silt

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CELLS = "cells.jsonl"
MOMENT_COLUMNS = ("d", "n", "beta", "engine", "Z", "mean_chi", "stderr_chi", "mean_chi2",
                  "stderr_chi2", "mean_J", "stderr_J", "samples")


def cell_id(d: int, n: int, beta: float) -> str:
    return f"d{d}_n{n}_beta{beta!r}"


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _rate(x):
    # a move type that was never attempted has no rate
    return float(x) if math.isfinite(x) else None


def _read_float(x):
    return float(x) if x is not None else float("nan")


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

def _cone_diagnostics(cfg: ExperimentConfig, d: int, n: int, beta: float, seed: int) -> dict:
    """Cone geometry on the simple-walk ensemble conditioned on b1 n <= J_n <= b2 n."""
    params = ConeParams.for_beta(beta, d, a1=cfg.a1, a2=cfg.a2, b1=cfg.b1, b2=cfg.b2,
                                 delta=cfg.delta, rho=cfg.rho, gamma=cfg.gamma,
                                 epsilon=cfg.epsilon, v=cfg.v)
    lo, hi = params.b1 * n, params.b2 * n
    codes = sample_paths(d, n, cfg.cone_samples, beta=0.0, band=(lo, hi), seed=seed,
                         chains=cfg.chains, thin=cfg.cone_thin, burn_in=cfg.burn_in)
    V = build_test_set(d, n, params.v)
    chis, ensemble, Js = [], [], []
    for c in codes:
        path = LatticePath(d, c)
        phi = silt(path)
        Js.append(phi.J)
        if not lo <= phi.J <= hi:
            continue
        decomp = assign_cones(phi, V)
        ensemble.append(classify_lines(decomp, params.a1, params.a2, params.delta, n, params.b2))
        end = path.sites[-1]
        chis.append(float(np.sqrt(np.dot(end, end))))
    out = {"sampled": len(codes), "conditioned": len(ensemble), "band": [lo, hi],
           "V": len(V), "mean_J_sampled": float(np.mean(Js)) if Js else None}
    logger.info("cell d=%d n=%d beta=%r: conditioned ensemble %d of %d samples",
                d, n, beta, len(ensemble), len(codes))
    if not ensemble:
        out["error"] = "no samples inside the band"
        return out
    grid = params.r_grid()
    sizes = np.zeros(grid.size)
    silts = np.zeros(grid.size)
    flags = np.zeros(grid.size)
    for cl in ensemble:
        rep = shape_of(cl, cl.J, params.rho, params.delta, grid)
        sizes += rep.class_size
        silts += rep.class_silt
        flags += rep.flagged
    k = len(ensemble)
    out["shape"] = [[float(r), s / k, c / k, f / k] for r, s, c, f in zip(grid, sizes, silts, flags)]
    out["palm"] = {name: palm_line_probability(ensemble, name)
                   for name in ("half", "half_pm", "minus", "plus", "empty", "over")}
    if 0 < beta < math.inf:
        cp = cone_process_distance(chis, ensemble, beta, n)
        out["quotient_half"] = _json_float(cp.quotient_half)
        out["quotient_empty"] = _json_float(cp.quotient_empty)
        out["upper_bound"] = _json_float(cp.upper_bound)
        out["lower_bound"] = _json_float(cp.lower_bound)
        try:
            samples = [(x, cl) for x, cl in zip(chis, ensemble) if cl.half.any()]
            ax = estimate_ax(samples, "half", 0.5, beta, n)
            counts = defaultdict(int)
            for x, _ in samples:
                counts[x] += 1
            pmf = {x: c / len(samples) for x, c in counts.items()}
            rep = condition_d_check(ax, pmf, params.gamma, params.epsilon, beta, n,
                                    d_one_variant=(d == 1))
            out["conditionD"] = {"r1": rep.r1, "r2": rep.r2, "rho_n": _json_float(rep.rho_n),
                                 "I_n": rep.I_n, "g_n": rep.g_n, "degenerate": rep.degenerate,
                                 "d_one_variant": rep.d_one_variant,
                                 "ensemble": len(samples), "saturated": len(ax.saturated)}
        except (EmptyClass, ValueError) as exc:
            out["conditionD"] = {"error": str(exc)}
    return out


def run_cell(cfg: ExperimentConfig, index: int, d: int, n: int, beta: float,
             threads: int = 1) -> dict:
    seed = chain_seed(cfg.seed, index)
    rec = {"d": d, "n": n, "beta": _json_float(beta), "engine": cfg.engine, "seed": seed}
    if cfg.engine == "exact":
        m = enumerate_ensemble(d, n, beta, cfg.budget)
        rec.update(Z=m.Z, mean_chi=m.mean_chi, stderr_chi=0.0, mean_chi2=m.mean_chi2,
                   stderr_chi2=0.0, mean_J=m.mean_J, stderr_J=0.0, samples=(2 * d) ** n)
    else:
        if cfg.engine == "mcmc":
            stats = sample_weakly_saw(ChainConfig(d, n, beta, cfg.sweeps, cfg.burn_in,
                                                  cfg.move_mix, seed, cfg.chains), threads)
        else:
            stats = sample_saw_pivot(d, n, cfg.sweeps, cfg.burn_in, seed, cfg.chains, threads)
        rec.update(Z=None, mean_chi=stats["chi"].mean, stderr_chi=stats["chi"].stderr,
                   mean_chi2=stats["chi2"].mean, stderr_chi2=stats["chi2"].stderr,
                   mean_J=stats["J"].mean, stderr_J=stats["J"].stderr, samples=stats.samples,
                   tau_int={k: s.tau_int for k, s in stats.observables.items()},
                   acc_A=_rate(stats.acc_A), acc_B=_rate(stats.acc_B))
    if cfg.cones:
        rec["cones"] = _cone_diagnostics(cfg, d, n, beta, seed)
    return rec


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _manifest(cfg: ExperimentConfig) -> dict:
    data = cfg.hashed_dict()
    return {"config_hash": config_hash(data), "config": data, "tool_version": __version__,
            "cells": [cell_id(*c) for c in cfg.cells()]}


def _load_manifest(run_dir: Path) -> dict:
    path = run_dir / MANIFEST
    if not path.is_file():
        raise RunIOError(f"no {MANIFEST} in {run_dir}")
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise RunIOError(f"cannot read {path}: {exc}") from exc
    if config_hash(manifest.get("config", {})) != manifest.get("config_hash"):
        raise CorruptState(f"{path}: config does not match its recorded hash")
    return manifest


def load_cells(run_dir: Path, manifest: dict) -> dict:
    path = run_dir / CELLS
    cells = {}
    if not path.exists():
        return cells
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                # a torn final line from an interrupted write is recomputed
                logger.warning("%s:%d unreadable, ignoring", path, lineno)
                continue
            if entry.get("config_hash") != manifest["config_hash"]:
                raise CorruptState(f"{path}:{lineno} belongs to a different config")
            cells[entry["cell"]] = entry
    return cells


def _execute(cfg: ExperimentConfig, run_dir: Path, manifest: dict, threads: int,
             limit: int | None) -> dict:
    done = load_cells(run_dir, manifest)
    todo = [(i, c) for i, c in enumerate(cfg.cells()) if cell_id(*c) not in done]
    if limit is not None:
        todo = todo[:limit]
    cell_threads = min(threads, len(todo)) if todo else 1
    inner = max(1, threads // max(cell_threads, 1))

    def work(item):
        i, (d, n, beta) = item
        return i, run_cell(cfg, i, d, n, beta, inner)

    path = run_dir / CELLS
    with path.open("a") as fh:
        pool = ThreadPoolExecutor(cell_threads) if cell_threads > 1 else None
        results = pool.map(work, todo) if pool else map(work, todo)
        try:
            for i, rec in results:  # in grid order, whatever finished first
                cid = cell_id(*cfg.cells()[i])
                entry = {"cell": cid, "config_hash": manifest["config_hash"],
                         "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "result": rec}
                fh.write(json.dumps(entry) + "\n")
                fh.flush()
                done[cid] = entry
        finally:
            if pool:
                pool.shutdown()
    return done


def run(cfg: ExperimentConfig, out: str | Path, threads: int | None = None,
        limit: int | None = None) -> dict:
    """Execute every missing cell of ``cfg`` into ``out``; returns the cell table."""
    cfg.validate()
    run_dir = Path(out)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RunIOError(f"cannot create {run_dir}: {exc}") from exc
    manifest = _manifest(cfg)
    mpath = run_dir / MANIFEST
    if mpath.exists():
        existing = _load_manifest(run_dir)
        if existing["config_hash"] != manifest["config_hash"]:
            raise CorruptState(f"{run_dir} holds a run of a different config")
        manifest = existing
    else:
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return _execute(cfg, run_dir, manifest, threads or cfg.threads, limit)


def resume(run_dir: str | Path, threads: int = 1, limit: int | None = None) -> dict:
    run_dir = Path(run_dir)
    manifest = _load_manifest(run_dir)
    cfg = config_from_hashed(manifest["config"])
    return _execute(cfg.validate(), run_dir, manifest, threads, limit)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def report(run_dir: str | Path) -> dict:
    """Write moments, exponents, shape and Condition D tables plus SVG charts."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise RunIOError(f"{run_dir} is not a directory")
    manifest = _load_manifest(run_dir)
    cfg = config_from_hashed(manifest["config"])
    cells = load_cells(run_dir, manifest)
    if not cells:
        raise RunIOError(f"{run_dir} has no finished cells")
    ordered = [cells[cell_id(*c)]["result"] for c in cfg.cells() if cell_id(*c) in cells]

    moments = [(r["d"], r["n"], r["beta"], r["engine"], r["Z"], r["mean_chi"], r["stderr_chi"],
                r["mean_chi2"], r["stderr_chi2"], r["mean_J"], r["stderr_J"], r["samples"])
               for r in ordered]
    files = {"moments.csv": _csv(MOMENT_COLUMNS, moments)}

    by_beta = defaultdict(list)
    for r in ordered:
        by_beta[r["beta"]].append(r)
    exp_rows, notes = [], []
    for beta, rows in by_beta.items():
        rows = sorted(rows, key=lambda r: r["n"])
        source = "exact" if cfg.engine == "exact" else "mcmc"
        series = MomentSeries(cfg.d, beta, [
            MomentRow(r["n"], r["mean_chi"], r["mean_chi2"], r["stderr_chi"],
                      r["stderr_chi2"], source) for r in rows])
        for obs in ("chi", "chi2"):
            try:
                exp_rows.append(exponent_row(cfg.d, beta, fit_exponent(series, obs)))
            except (InsufficientData, ValueError) as exc:
                notes.append(f"beta={beta} {obs}: no fit ({exc})")
        notes.append(theorem_report(series, cfg.d, _read_float(beta)).text())
        files[f"chart_beta{beta}.svg"] = moment_chart(series, _read_float(beta))
    files["exponents.csv"] = exponents_csv(exp_rows)
    files["report.txt"] = "\n\n".join(notes) + "\n"

    shape_rows, cond_rows = [], []
    for r in ordered:
        cone = r.get("cones")
        if not cone:
            continue
        for row in cone.get("shape", []):
            shape_rows.append((r["n"], r["beta"], *row))
        cd = cone.get("conditionD")
        if cd and "error" not in cd:
            cond_rows.append((r["d"], r["n"], r["beta"], cd["r1"], cd["r2"], cd["rho_n"],
                              cd["I_n"], cd["g_n"], cd["degenerate"], cd["d_one_variant"],
                              cd["ensemble"]))
    files["shape.csv"] = shape_csv(shape_rows)
    files["conditionD.csv"] = _csv(("d", "n", "beta", "r1", "r2", "rho_n", "I_n", "g_n",
                                    "degenerate", "d_one_variant", "ensemble"), cond_rows)
    try:
        for name, text in files.items():
            (run_dir / name).write_text(text)
    except OSError as exc:
        raise RunIOError(f"cannot write report into {run_dir}: {exc}") from exc
    return files
