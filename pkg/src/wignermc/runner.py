"""Experiment orchestration: batched parallel runs, sweeps and imaging.

Work is partitioned into batches over disjoint trajectory index ranges
fixed entirely by the configuration; workers only decide who computes
which batch.  Per-batch results are keyed by batch index and folded in
index order, so every output file is byte-identical for any worker
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bell import (chsh_analytic, clauser_horne_analytic, optimal_angles,
                   wick_oracle)
from .config import MODE_ENGINE, SPATIAL_ENGINE, RunConfig
from .errors import ConfigError, EstimationError
from .modes import bell_port_block
from .output import (ETA_SWEEP_COLUMNS, GAIN_SWEEP_COLUMNS, write_csv,
                     write_image_csv, write_pgm, write_series_csv,
                     write_summary)
from .spatial import (PixelPairSelection, SpatialSums, combine_spatial_sums,
                      frequency_to_pixel, partner_pixel, ring_geometry,
                      scan_intersection_pixels, spatial_trajectory_block)
from .stats import (BellResult, MomentAccumulator, bell_estimate,
                    convergence_series)


def batch_ranges(n_trajectories: int, batch_count: int) -> list[tuple[int, int]]:
    """Even partition of [0, n) into index ranges, one per batch."""
    bounds = [n_trajectories * j // batch_count for j in range(batch_count + 1)]
    return [(bounds[j], bounds[j + 1] - bounds[j]) for j in range(batch_count)]


def snapshot_batch_counts(total_batches: int, points: int) -> list[int]:
    """Log-spaced batch counts for the convergence series.

    Starts at two batches (the jackknife minimum) and always includes
    the full ensemble.
    """
    if total_batches < 2:
        return [total_batches]
    points = max(1, min(points, total_batches - 1))
    ks = np.exp(np.linspace(math.log(2), math.log(total_batches), points))
    return sorted({int(round(k)) for k in ks})


def _output_paths(config: RunConfig, out_dir) -> dict[str, Path]:
    base = Path(out_dir) if out_dir is not None else Path(".")
    base.mkdir(parents=True, exist_ok=True)
    return {
        "series": base / f"{config.out_prefix}_series.csv",
        "summary": base / f"{config.out_prefix}_summary.json",
        "gain_sweep": base / f"{config.out_prefix}_gain_sweep.csv",
        "eta_sweep": base / f"{config.out_prefix}_eta_sweep.csv",
        "image_pgm": base / f"{config.out_prefix}_image.pgm",
        "image_corrected_pgm": base / f"{config.out_prefix}_image_corrected.pgm",
        "image_csv": base / f"{config.out_prefix}_image.csv",
        "config": base / f"{config.out_prefix}_config.ini",
    }


def _base_record(config: RunConfig) -> dict:
    return {
        "version": __version__,
        "master_seed": config.master_seed,
        "config_hash": config.config_hash(),
        "engine": config.engine,
        "gain": config.gain,
        "eta": config.eta,
        "n_trajectories": config.n_trajectories,
        "angles": {
            "theta1": config.angles.theta1,
            "theta1_prime": config.angles.theta1_prime,
            "theta2": config.angles.theta2,
            "theta2_prime": config.angles.theta2_prime,
        },
    }


def _result_record(result: BellResult) -> dict:
    return {
        "correlations": dict(result.correlations),
        "chsh": result.chsh,
        "chsh_stderr": result.chsh_stderr,
        "ch": result.ch_ratio,
        "ch_stderr": result.ch_stderr,
        "negative_fraction": result.negative_fraction,
        "n_trajectories": result.n_trajectories,
    }


# ----------------------------------------------------------------------
# batch execution
# ----------------------------------------------------------------------

def _run_mode_batches(config: RunConfig) -> MomentAccumulator:
    acc = MomentAccumulator(config_key=config.config_hash())
    ranges = batch_ranges(config.n_trajectories, config.resolved_batch_count())

    def task(index: int):
        start, count = ranges[index]
        return index, bell_port_block(config.gain, config.angles, config.eta,
                                      config.master_seed, start, count)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(task, b) for b in range(len(ranges))]
        for fut in as_completed(futures):
            index, ports = fut.result()
            acc.update(ports, batch_index=index)
    return acc


def resolve_pixel_selection(config: RunConfig) -> PixelPairSelection | None:
    """Configured analyzed pixel, or the analytic ring intersection.

    Returns None when neither is available (no configured pixel and the
    phase-matching geometry has no ring intersections), which is valid
    for image-only runs.
    """
    sp = config.spatial
    if sp.pixel is not None:
        first = (int(sp.pixel[0]), int(sp.pixel[1]))
        return PixelPairSelection(first, partner_pixel(sp.nx, sp.ny, first))
    geo = ring_geometry(sp.crystal_params(config.gain))
    if not geo.intersections:
        return None
    qx, qy = geo.intersections[0]
    first = (frequency_to_pixel(sp.nx, sp.dx, qx),
             frequency_to_pixel(sp.ny, sp.dx, qy))
    return PixelPairSelection(first, partner_pixel(sp.nx, sp.ny, first))


def _run_spatial_batches(config: RunConfig,
                         selection: PixelPairSelection | None):
    sp = config.spatial
    params = sp.crystal_params(config.gain)
    ranges = batch_ranges(config.n_trajectories, config.resolved_batch_count())
    acc = MomentAccumulator(config_key=config.config_hash())

    def task(index: int):
        start, count = ranges[index]
        return index, spatial_trajectory_block(
            params, sp.nx, sp.ny, sp.dx, config.master_seed, start, count,
            angles=config.angles, eta=config.eta, selection=selection)

    by_index: dict[int, SpatialSums] = {}
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(task, b) for b in range(len(ranges))]
        for fut in as_completed(futures):
            index, sums = fut.result()
            by_index[index] = sums
            if sums.ports is not None:
                acc.update(sums.ports, batch_index=index)
    total = combine_spatial_sums(by_index[k] for k in sorted(by_index))
    return acc, total


# ----------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------

@dataclass
class RunArtifacts:
    """Everything a run produced, for callers and tests."""

    config: RunConfig
    result: BellResult
    series: list[dict]
    paths: dict[str, Path]
    accumulator: MomentAccumulator


def run_point(config: RunConfig, out_dir=None,
              write_files: bool = True) -> RunArtifacts:
    """Single Bell estimate plus its convergence series.

    For the spatial engine the analyzed pixel pair comes from the
    configuration or the analytic ring geometry; lacking both is a
    configuration error since a Bell estimate needs analyzed modes.
    """
    if config.engine == MODE_ENGINE:
        acc = _run_mode_batches(config)
    else:
        selection = resolve_pixel_selection(config)
        if selection is None:
            raise ConfigError(
                "spatial Bell run needs an analyzed pixel: set [spatial] "
                "pixel, or parameters whose rings intersect")
        acc, _ = _run_spatial_batches(config, selection)

    result = bell_estimate(acc)
    snapshots = [acc.prefix(k) for k in
                 snapshot_batch_counts(acc.n_batches, config.snapshots)]
    series = convergence_series(snapshots)
    paths = {}
    if write_files:
        all_paths = _output_paths(config, out_dir)
        paths["series"] = write_series_csv(all_paths["series"], series)
        record = _base_record(config)
        record["result"] = _result_record(result)
        paths["summary"] = write_summary(all_paths["summary"], record)
        config.save(all_paths["config"])
        paths["config"] = all_paths["config"]
    return RunArtifacts(config=config, result=result, series=series,
                        paths=paths, accumulator=acc)


def sweep_gain(config: RunConfig, gains, out_dir=None,
               write_files: bool = True):
    """One Bell estimate per pair gain, against the closed forms."""
    rows = []
    results = []
    for gain in gains:
        cfg = config.with_overrides(gain=float(gain))
        acc = (_run_mode_batches(cfg) if cfg.engine == MODE_ENGINE
               else run_point(cfg, write_files=False).accumulator)
        result = bell_estimate(acc)
        results.append(result)
        oracle = wick_oracle(cfg.gain, cfg.eta, cfg.angles)
        rows.append((cfg.gain, result.chsh, result.chsh_stderr,
                     chsh_analytic(cfg.gain), result.ch_ratio,
                     result.ch_stderr, oracle.ch_ratio,
                     result.negative_fraction))
    paths = {}
    if write_files:
        all_paths = _output_paths(config, out_dir)
        paths["gain_sweep"] = write_csv(all_paths["gain_sweep"],
                                        GAIN_SWEEP_COLUMNS, rows)
        record = _base_record(config)
        record["gains"] = [float(g) for g in gains]
        record["results"] = [_result_record(r) for r in results]
        paths["summary"] = write_summary(all_paths["summary"], record)
    return rows, results, paths


def sweep_efficiency(config: RunConfig, etas, out_dir=None,
                     write_files: bool = True):
    """One Bell estimate per detector efficiency at fixed gain.

    The leading-order prediction for the coincidence ratio is linear in
    eta; reusing the master seed across points means every point sees
    the same trajectories, so the expected flatness of the CHSH value
    across eta is tested sharply.
    """
    rows = []
    results = []
    for eta in etas:
        cfg = config.with_overrides(eta=float(eta))
        acc = (_run_mode_batches(cfg) if cfg.engine == MODE_ENGINE
               else run_point(cfg, write_files=False).accumulator)
        result = bell_estimate(acc)
        results.append(result)
        rows.append((cfg.eta, result.chsh, result.chsh_stderr,
                     result.ch_ratio, result.ch_stderr,
                     clauser_horne_analytic(cfg.gain, cfg.eta),
                     result.negative_fraction))
    paths = {}
    if write_files:
        all_paths = _output_paths(config, out_dir)
        paths["eta_sweep"] = write_csv(all_paths["eta_sweep"],
                                       ETA_SWEEP_COLUMNS, rows)
        record = _base_record(config)
        record["etas"] = [float(e) for e in etas]
        record["results"] = [_result_record(r) for r in results]
        paths["summary"] = write_summary(all_paths["summary"], record)
    return rows, results, paths


@dataclass
class SpatialImageArtifacts:
    config: RunConfig
    sums: SpatialSums
    selection: PixelPairSelection | None
    scanned: PixelPairSelection | None
    scan_message: str | None
    result: BellResult | None
    estimate_message: str | None
    paths: dict[str, Path]


def spatial_image(config: RunConfig, out_dir=None,
                  write_files: bool = True) -> SpatialImageArtifacts:
    """Far-field mean-intensity imaging run.

    Writes the uncorrected total-intensity image (PGM and long CSV), a
    corrected-intensity PGM where the ring structure is visible above
    the vacuum background, and a summary with the configured and scanned
    intersection pixel pairs.  When an analyzed pixel is available the
    Bell estimate at that pixel is included.
    """
    if config.engine != SPATIAL_ENGINE:
        raise ConfigError("spatial_image requires engine = spatial")
    selection = resolve_pixel_selection(config)
    acc, sums = _run_spatial_batches(config, selection)

    scanned, scan_message = None, None
    try:
        scanned = scan_intersection_pixels(sums.mean_h(), sums.mean_v(),
                                           sums.covariance_map(),
                                           config.spatial.smooth_radius)
    except EstimationError as exc:
        scan_message = str(exc)

    # The image is the product here; a failed Bell estimate at the
    # analyzed pixel (too few trajectories, zero gain) is reported in
    # the summary instead of aborting the run.
    result, estimate_message = None, None
    if selection is not None:
        try:
            result = bell_estimate(acc)
        except EstimationError as exc:
            estimate_message = str(exc)

    paths = {}
    if write_files:
        all_paths = _output_paths(config, out_dir)
        uncorrected = sums.mean_total_uncorrected()
        corrected = np.clip(sums.mean_h() + sums.mean_v(), 0.0, None)
        paths["image_pgm"] = write_pgm(all_paths["image_pgm"], uncorrected)
        paths["image_corrected_pgm"] = write_pgm(
            all_paths["image_corrected_pgm"], corrected)
        paths["image_csv"] = write_image_csv(all_paths["image_csv"], {
            "mean_total_uncorrected": uncorrected,
            "mean_h_corrected": sums.mean_h(),
            "mean_v_corrected": sums.mean_v(),
            "partner_covariance": sums.covariance_map(),
        })
        record = _base_record(config)
        record["selection"] = None if selection is None else \
            [list(selection.first), list(selection.second)]
        record["scanned_pair"] = None if scanned is None else \
            [list(scanned.first), list(scanned.second)]
        if scan_message is not None:
            record["scan_message"] = scan_message
        if result is not None:
            record["result"] = _result_record(result)
        if estimate_message is not None:
            record["estimate_message"] = estimate_message
        paths["summary"] = write_summary(all_paths["summary"], record)
        config.save(all_paths["config"])
        paths["config"] = all_paths["config"]
    return SpatialImageArtifacts(config=config, sums=sums, selection=selection,
                                 scanned=scanned, scan_message=scan_message,
                                 result=result, estimate_message=estimate_message,
                                 paths=paths)
