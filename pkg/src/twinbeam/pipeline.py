"""Pipeline stages: calibrate, run, fit, report, screens-stats.

Each stage reads the files earlier stages wrote into the configured
output directory and refuses inputs whose config hash differs from the
active configuration, so results from different physics never mix.
The `run` stage treats an existing matching calibration table as a
cache and recomputes it otherwise.
"""

from __future__ import annotations

import math
import os
import time
from typing import Sequence

import numpy as np

from .config import RunConfig, config_hash
from .errors import CalibrationError, ConfigError
from .experiment import (CalibrationRow, DataPoint, FitResult, calibrate,
                         erf_transmission_model, fit_alpha, run_monte_carlo)
from .report import (ResultRecord, atomic_write_text, calibration_paths,
                     curve_paths, fits_paths, load_json, write_calibration,
                     write_curves, write_fits, write_report, _json_text)
from .turbulence import (estimate_structure_function, fit_loglog_slope,
                         r0_from_strength, screen_checksum)


def _calibration_rows_from_json(data: dict) -> list[CalibrationRow]:
    return [CalibrationRow(strength=r["strength"], w_lt=r["w_lt_m"],
                           sigma_R2=r["sigma_R2"]) for r in data["rows"]]


def _data_points_from_json(data: dict) -> list[DataPoint]:
    return [DataPoint(sigma_R2=p["sigma_R2"], mean=p["mean"],
                      std_error=p["stderr"], n_samples=p["n"])
            for p in data["points"]]


def run_calibrate(cfg: RunConfig) -> ResultRecord:
    """Measure the chamber response and write the calibration table."""
    started = time.perf_counter()
    grid = cfg.make_grid()
    model = cfg.make_model()
    rows = calibrate(grid, cfg.setup, model, cfg.cal_strengths,
                     cfg.cal_samples, cfg.seed, cfg.coefficient)
    record = ResultRecord(config=cfg, seed=cfg.seed, calibration=rows)
    record.wall_clock_seconds = time.perf_counter() - started
    write_calibration(record, cfg.out_dir)
    return record


def _load_calibration(cfg: RunConfig) -> list[CalibrationRow] | None:
    _, json_path = calibration_paths(cfg.out_dir)
    try:
        data = load_json(json_path, "calibration", config_hash(cfg))
    except (FileNotFoundError, ConfigError):
        return None
    return _calibration_rows_from_json(data)


def run_sweep(cfg: RunConfig) -> ResultRecord:
    """Sweep the sigma_R^2 targets over all configured channels.

    Reuses a calibration table already on disk when its config hash
    matches; otherwise calibrates first (and writes that table).
    """
    started = time.perf_counter()
    rows = _load_calibration(cfg)
    if rows is None:
        rows = run_calibrate(cfg).calibration
    grid = cfg.make_grid()
    model = cfg.make_model()
    max_sigma = max(r.sigma_R2 for r in rows)
    targets = [t for t in cfg.sigma_targets if t <= max_sigma]
    skipped = [t for t in cfg.sigma_targets if t > max_sigma]
    if skipped:
        raise CalibrationError(
            f"sigma_R2 targets {skipped} exceed the calibrated range "
            f"(max {max_sigma:g}); extend turbulence.strengths")
    curves = run_monte_carlo(grid, cfg.setup, model, rows, targets,
                             cfg.channels, cfg.n_samples, cfg.seed,
                             n_threads=cfg.threads,
                             poisson_mean=cfg.poisson_mean)
    record = ResultRecord(config=cfg, seed=cfg.seed, calibration=rows,
                          curves=curves)
    record.wall_clock_seconds = time.perf_counter() - started
    write_curves(record, cfg.out_dir)
    return record


def _require_files(paths: Sequence[str], hint: str) -> None:
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(
            f"missing input files: {', '.join(missing)}; run {hint} first")


def run_fit(cfg: RunConfig) -> ResultRecord:
    """Fit the erf sensitivity model to each channel's curve on disk."""
    started = time.perf_counter()
    expect = config_hash(cfg)
    json_paths = [curve_paths(cfg.out_dir, c)[1] for c in cfg.channels]
    _require_files(json_paths, "`twinbeam run`")
    record = ResultRecord(config=cfg, seed=cfg.seed)
    rows = _load_calibration(cfg)
    if rows is not None:
        record.calibration = rows
    for channel, path in zip(cfg.channels, json_paths):
        data = load_json(path, "curve", expect)
        points = _data_points_from_json(data)
        record.curves[channel] = points
        record.fits[channel] = fit_alpha(points, cfg.setup, cfg.coefficient)
    record.wall_clock_seconds = time.perf_counter() - started
    write_fits(record, cfg.out_dir)
    return record


def run_report(cfg: RunConfig) -> list[str]:
    """Combine calibration, curves, and fits into the report bundle."""
    expect = config_hash(cfg)
    cal_json = calibration_paths(cfg.out_dir)[1]
    curve_jsons = [curve_paths(cfg.out_dir, c)[1] for c in cfg.channels]
    fits_json = fits_paths(cfg.out_dir)[1]
    _require_files([cal_json, *curve_jsons, fits_json],
                   "`twinbeam calibrate`, `twinbeam run`, and `twinbeam fit`")

    record = ResultRecord(config=cfg, seed=cfg.seed)
    record.calibration = _calibration_rows_from_json(
        load_json(cal_json, "calibration", expect))
    for channel, path in zip(cfg.channels, curve_jsons):
        record.curves[channel] = _data_points_from_json(
            load_json(path, "curve", expect))
    fits_data = load_json(fits_json, "fits", expect)
    for entry in fits_data["fits"]:
        channel = entry["channel"]
        n_points = len(record.curves.get(channel, ())) or 4
        record.fits[channel] = FitResult(
            alpha=entry["alpha"], ci=entry["ci"],
            residual_rms=entry["residual_rms"], n_points=n_points)

    sigma_max = max((p.sigma_R2 for pts in record.curves.values()
                     for p in pts), default=0.0)
    sigma_grid = np.linspace(0.0, sigma_max, 101) if sigma_max > 0 else [0.0]
    model_curves = {}
    for channel, fit in record.fits.items():
        values = erf_transmission_model(np.asarray(sigma_grid), fit.alpha,
                                        cfg.setup.w0, cfg.setup.slit_width)
        values = np.atleast_1d(values)
        model_curves[channel] = list(zip(map(float, sigma_grid),
                                         map(float, values)))
    return write_report(record, cfg.out_dir, model_curves)


def run_screens_stats(cfg: RunConfig, strength: float | None = None,
                      count: int = 100) -> dict:
    """Draw a screen ensemble, validate its statistics, archive checksums.

    Writes ``screens_stats.json`` holding the model parameters, master
    seed, per-screen checksums, the estimated structure function, and
    (for Kolmogorov screens) the log-log slope over the trusted range.
    """
    if count < 50:
        raise ConfigError(f"screens-stats needs count >= 50, got {count}")
    model = cfg.make_model()
    if getattr(model, "representation", None) != "screen":
        raise ConfigError(
            f"screens-stats requires a screen model, got {cfg.model_name!r}")
    grid = cfg.make_grid()
    if strength is None:
        positive = [s for s in cfg.cal_strengths if s > 0]
        if not positive:
            raise ConfigError("no positive strength to sample; pass one")
        strength = positive[-1]
    if not strength > 0:
        raise ConfigError(f"strength must be positive, got {strength:g}")

    screens = []
    for i in range(count):
        ss = np.random.SeedSequence((cfg.seed, 3, 0, i))
        screens.append(model.realize(grid, float(strength), cfg.setup.k_cal,
                                     np.random.default_rng(ss)))
    table = estimate_structure_function(screens)
    r0 = r0_from_strength(float(strength))
    r_lo, r_hi = 4.0 * grid.dx, grid.extent / 8.0
    slope = None
    if r_hi > r_lo:
        try:
            slope, _ = fit_loglog_slope(table.r, table.d_phi, r_lo, r_hi)
        except ValueError:
            slope = None

    stats = {
        "kind": "screens_stats",
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "model": cfg.model_name,
        "strength": float(strength),
        "r0_m": None if math.isinf(r0) else r0,
        "count": count,
        "grid_n": grid.n,
        "grid_extent_m": grid.extent,
        "loglog_slope": slope,
        "structure_function": {
            "r_m": [float(v) for v in table.r],
            "d_phi": [float(v) for v in table.d_phi],
            "stderr": [float(v) for v in table.stderr],
        },
        "checksums": [screen_checksum(s) for s in screens],
    }
    atomic_write_text(os.path.join(cfg.out_dir, "screens_stats.json"),
                      _json_text(stats))
    return stats


def run_pipeline(cfg: RunConfig, stage: str, **kwargs):
    """Dispatch one named stage; `run` covers calibrate when needed."""
    if stage == "calibrate":
        return run_calibrate(cfg)
    if stage == "run":
        return run_sweep(cfg)
    if stage == "fit":
        return run_fit(cfg)
    if stage == "report":
        return run_report(cfg)
    if stage == "screens-stats":
        return run_screens_stats(cfg, **kwargs)
    raise ConfigError(f"unknown pipeline stage {stage!r}")
