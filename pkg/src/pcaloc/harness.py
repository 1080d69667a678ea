"""Monte-Carlo runs: one dataset per trial, every estimator on the same data.

Outputs written by :func:`write_outputs`:

``results.csv``
    sweep_axis, sweep_value, estimator, trial, source_index, error_m, time_s, flags
``summary.csv``
    sweep_axis, sweep_value, estimator, trials, rmse_m, failure_rate, mean_time_s
``plot_rmse.gp``
    gnuplot script drawing RMSE against the sweep value per estimator.

RMSE pools per-source errors within the failure radius; errors beyond it (or
missing estimates) count toward the failure rate only.
"""
from __future__ import annotations

import csv
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import estimators as est
from .config import ExperimentConfig
from .errors import PCALocError
from .scenario import SignalKind, normalize_power, sample_covariance, synthesize_snapshots
from .search import alternating_projection, evaluate_grid, pick_peaks

RESULT_COLUMNS = ["sweep_axis", "sweep_value", "estimator", "trial", "source_index", "error_m", "time_s", "flags"]
SUMMARY_COLUMNS = ["sweep_axis", "sweep_value", "estimator", "trials", "rmse_m", "failure_rate", "mean_time_s"]


@dataclass
class TrialRecord:
    sweep_value: float
    trial: int
    estimator: str
    estimates: np.ndarray  # (n, D), n <= Q
    errors: np.ndarray  # (Q,), NaN where no estimate was assigned
    time_s: float
    flags: tuple = ()


def assignment_errors(estimates, truth) -> np.ndarray:
    """Per-source errors under the assignment minimizing total squared error."""
    truth = np.asarray(truth, dtype=float)
    estimates = np.asarray(estimates, dtype=float).reshape(-1, truth.shape[1])
    Q, n = len(truth), len(estimates)
    errors = np.full(Q, np.nan)
    if n == 0:
        return errors
    d2 = np.sum((truth[:, None, :] - estimates[None, :, :]) ** 2, axis=-1)
    if n <= Q <= 4:
        best, best_cost = None, np.inf
        for perm in itertools.permutations(range(Q), n):
            # perm[i] is the source matched to estimate i
            c = sum(d2[perm[i], i] for i in range(len(perm)))
            if c < best_cost:
                best, best_cost = perm, c
        rows, cols = np.asarray(best), np.arange(len(best))
    else:
        rows, cols = linear_sum_assignment(d2)
    errors[rows] = np.sqrt(d2[rows, cols])
    return errors


def _trial_rng(seed: int, sweep_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, sweep_index, trial]))


def _ap_cost(name, kind, geom, cov, x, S, cfg):
    if name == "rml":
        if kind is SignalKind.NONCOHERENT:
            return lambda P: est.rml_cost_noncoherent(geom, cov, P)
        return lambda P: est.rml_cost_coherent(geom, cov, P)
    if name == "rc":
        n_signals = None if kind is SignalKind.NONCOHERENT else 1
        return lambda P: est.rc_cost(geom, cov, P, n_signals=n_signals, truncation=cfg.rc_truncation,
                                     form=cfg.rc_form)
    if name == "exact_ml_oracle":
        return lambda P: est.exact_ml_cost(geom, x, P, S[:P.shape[-2]])
    raise ValueError(name)


def estimate_locations(name: str, cfg: ExperimentConfig, x, cov, S=None, workers: int = 1):
    """Run one estimator; returns (estimates, flags)."""
    sc = cfg.scenario
    geom, grid, Q = sc.geometry, cfg.grid, sc.n_sources
    if name in ("music", "mvdr"):
        if name == "music":
            spec = lambda p: est.music_spectrum(geom, cov, p, Q, cfg.music_floor)
        else:
            blocks = est.mvdr_inverse_blocks(cov, cfg.mvdr_loading)
            spec = lambda p: est.mvdr_spectrum(geom, blocks, p)
        vals = evaluate_grid(spec, grid.points, workers=workers)
        peaks = pick_peaks(vals, grid, Q, cfg.min_separation)
        return peaks.locations, ("short_peaks",) if peaks.short else ()
    cost = _ap_cost(name, sc.signal.kind, geom, cov, x, S, cfg)
    state = alternating_projection(cost, grid, Q, cfg.ap_tol, cfg.ap_max_iter, cfg.move_tol_cells, workers)
    return state.current, () if state.converged else ("not_converged",)


def run_trial(cfg: ExperimentConfig, sweep_value: float, rng: np.random.Generator, trial: int = 0,
              workers: int = 1) -> list:
    """Synthesize one dataset and run every configured estimator on it."""
    sc = cfg.scenario_at(sweep_value)
    syn = synthesize_snapshots(sc, rng)
    x = normalize_power(syn.snapshots) if cfg.normalize_power else syn.snapshots
    cov = sample_covariance(x)
    records = []
    for name in cfg.estimators:
        t0 = time.perf_counter()
        try:
            locs, flags = estimate_locations(name, cfg, x, cov, syn.signals, workers)
            errors = assignment_errors(locs, sc.true_locations)
        except (PCALocError, np.linalg.LinAlgError) as exc:
            locs, flags = np.zeros((0, sc.geometry.dim)), (f"error:{type(exc).__name__}",)
            errors = np.full(sc.n_sources, np.nan)
        records.append(TrialRecord(float(sweep_value), trial, name, np.asarray(locs), errors,
                                   time.perf_counter() - t0, tuple(flags)))
    return records


def run_monte_carlo(cfg: ExperimentConfig, threads: int = 1, seed: Optional[int] = None) -> list:
    """All trials at all sweep values, merged in (sweep, trial, estimator) order."""
    seed = cfg.seed if seed is None else seed
    jobs = [(i, v, t) for i, v in enumerate(cfg.sweep_values) for t in range(cfg.trials)]

    def job(item):
        i, v, t = item
        return run_trial(cfg, v, _trial_rng(seed, i, t), t)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(job, jobs))
    else:
        chunks = [job(j) for j in jobs]
    return [r for chunk in chunks for r in chunk]


def summarize(records: Sequence[TrialRecord], failure_radius: float) -> list:
    """Per (sweep value, estimator): inlier RMSE, failure rate, mean time."""
    groups = {}
    for r in records:
        groups.setdefault((r.sweep_value, r.estimator), []).append(r)
    rows = []
    for (value, name), recs in groups.items():
        errs = np.concatenate([r.errors for r in recs])
        ok = np.isfinite(errs) & (errs <= failure_radius)
        rmse = float(np.sqrt(np.mean(errs[ok] ** 2))) if np.any(ok) else float("nan")
        rows.append({
            "sweep_value": value,
            "estimator": name,
            "trials": len(recs),
            "rmse_m": rmse,
            "failure_rate": float(1 - ok.mean()),
            "mean_time_s": float(np.mean([r.time_s for r in recs])),
        })
    return rows


def _fmt(v) -> str:
    return repr(float(v))


def write_results(records, path, axis: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            for q, e in enumerate(r.errors):
                w.writerow([axis, _fmt(r.sweep_value), r.estimator, r.trial, q, _fmt(e), _fmt(r.time_s),
                            ";".join(r.flags)])


def write_summary(rows, path, axis: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in rows:
            w.writerow([axis, _fmt(s["sweep_value"]), s["estimator"], s["trials"], _fmt(s["rmse_m"]),
                        _fmt(s["failure_rate"]), _fmt(s["mean_time_s"])])


def plot_script(estimators: Sequence[str], axis: str) -> str:
    names = " ".join(estimators)
    return "\n".join([
        "# RMSE versus sweep value; run with: gnuplot -p plot_rmse.gp",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{axis}'",
        "set ylabel 'RMSE (m)'",
        "set logscale y",
        "set grid",
        f"estimators = '{names}'",
        "plot for [e in estimators] 'summary.csv' using 2:(strcol(3) eq e ? $5 : 1/0) "
        "with linespoints title e",
        "",
    ])


def write_outputs(cfg: ExperimentConfig, records, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results(records, out / "results.csv", cfg.sweep_axis)
    write_summary(summarize(records, cfg.failure_radius), out / "summary.csv", cfg.sweep_axis)
    (out / "plot_rmse.gp").write_text(plot_script(cfg.estimators, cfg.sweep_axis))
    return out


def spectrum_surface(cfg: ExperimentConfig, estimator: str, workers: int = 1):
    """Grid points and spectrum values for the first trial of the first sweep value."""
    sc = cfg.scenario_at(cfg.sweep_values[0])
    syn = synthesize_snapshots(sc, _trial_rng(cfg.seed, 0, 0))
    x = normalize_power(syn.snapshots) if cfg.normalize_power else syn.snapshots
    cov = sample_covariance(x)
    geom = sc.geometry
    if estimator == "music":
        fn = lambda p: est.music_spectrum(geom, cov, p, sc.n_sources, cfg.music_floor)
    elif estimator == "mvdr":
        blocks = est.mvdr_inverse_blocks(cov, cfg.mvdr_loading)
        fn = lambda p: est.mvdr_spectrum(geom, blocks, p)
    else:
        raise ValueError(f"no spectrum for estimator {estimator!r}")
    return cfg.grid.points, evaluate_grid(fn, cfg.grid.points, workers=workers)


def write_spectrum(points, values, path) -> None:
    """CSV with one row per grid point; ``path`` may be an open text stream."""
    if hasattr(path, "write"):
        _spectrum_rows(points, values, path)
        return
    with open(path, "w", newline="") as fh:
        _spectrum_rows(points, values, fh)


def _spectrum_rows(points, values, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([*["x", "y", "z"][: points.shape[1]], "value"])
    for p, v in zip(points, values):
        w.writerow([*(_fmt(c) for c in p), _fmt(v)])
