"""Validation metrics for comparing reservation datasets and simulators."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .corpus import DAY_MINUTES

log = logging.getLogger("fleetgrid.metrics")


@dataclass
class ZScoreReport:
    station_ids: list[int]
    zscores: np.ndarray
    mean_abs: float
    excluded: list[int]


def station_zscores(sim_counts: dict, real_mean: dict, real_std: dict) -> ZScoreReport:
    """Z-score of simulated daily booking counts against real per-station
    statistics; stations with zero real standard deviation are excluded."""
    ids, zs, excluded = [], [], []
    for sid in sorted(real_mean):
        sigma = real_std[sid]
        if sigma <= 0:
            excluded.append(sid)
            continue
        y = sim_counts.get(sid, 0)
        ids.append(sid)
        zs.append((y - real_mean[sid]) / sigma)
    if excluded:
        log.warning("excluded %d stations with zero booking-count variance",
                    len(excluded))
    zs = np.asarray(zs, dtype=float)
    mean_abs = float(np.abs(zs).mean()) if len(zs) else 0.0
    return ZScoreReport(station_ids=ids, zscores=zs, mean_abs=mean_abs,
                        excluded=excluded)


def station_daily_stats(reservations, n_days):
    """Per-station mean and std of daily booking counts in a multi-day log."""
    counts: dict[int, np.ndarray] = {}
    for r in reservations:
        day = int(r.t_start) // DAY_MINUTES
        if day >= n_days:
            raise ValueError(f"reservation {r.reservation_id} outside the "
                             f"{n_days}-day window")
        counts.setdefault(r.station_id, np.zeros(n_days))[day] += 1
    mean = {sid: float(c.mean()) for sid, c in counts.items()}
    std = {sid: float(c.std()) for sid, c in counts.items()}
    return mean, std


def wasserstein_1d(a, b) -> float:
    """Order-1 Wasserstein distance between two empirical distributions,
    computed by integrating the gap between the empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be nonempty")
    values = np.concatenate([a, b])
    values.sort(kind="mergesort")
    deltas = np.diff(values)
    cdf_a = np.searchsorted(a, values[:-1], side="right") / len(a)
    cdf_b = np.searchsorted(b, values[:-1], side="right") / len(b)
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


@dataclass
class UtilizationReport:
    count_rate: float
    time_rate: float
    hourly_occupancy: np.ndarray  # fraction of the fleet booked, per hour


def utilization(reservations, n_vehicles, horizon=DAY_MINUTES) -> UtilizationReport:
    """Count- and time-utilization of a fleet over the horizon.

    count_rate: fraction of vehicles with at least one reservation.
    time_rate: mean booked fraction of the horizon among used vehicles.
    """
    if n_vehicles <= 0:
        raise ValueError("fleet must be nonempty")
    booked: dict[int, float] = {}
    hourly = np.zeros(horizon // 60 + (1 if horizon % 60 else 0))
    for r in reservations:
        start = max(0.0, float(r.t_start))
        end = min(float(horizon), float(r.t_end))
        if end <= start:
            continue
        booked[r.vehicle_id] = booked.get(r.vehicle_id, 0.0) + (end - start)
        first, last = int(start // 60), int((end - 1e-9) // 60)
        for h in range(first, last + 1):
            lo, hi = h * 60.0, (h + 1) * 60.0
            hourly[h] += max(0.0, min(end, hi) - max(start, lo))
    count_rate = len(booked) / n_vehicles
    time_rate = float(np.mean([m / horizon for m in booked.values()])) if booked else 0.0
    return UtilizationReport(count_rate=count_rate, time_rate=time_rate,
                             hourly_occupancy=hourly / (60.0 * n_vehicles))


@dataclass
class ModeShareReport:
    shares: dict[str, float]
    reference: dict[str, float]
    avg_ratio: float


def mode_share(assignments, reference: dict) -> ModeShareReport:
    """Observed mode shares plus the average symmetric share ratio.

    The ratio per mode is max(share/ref, ref/share) so that 1.0 is a perfect
    match and deviations in either direction are penalized.
    """
    assignments = list(assignments)
    if not assignments:
        raise ValueError("no mode assignments")
    n = len(assignments)
    shares = {m: 0.0 for m in reference}
    for m in assignments:
        shares[m] = shares.get(m, 0.0) + 1.0
    shares = {m: c / n for m, c in shares.items()}

    ratios = []
    for m, ref in reference.items():
        share = shares.get(m, 0.0)
        if ref <= 0 and share <= 0:
            continue
        if ref <= 0 or share <= 0:
            ratios.append(float("inf"))
        else:
            ratios.append(max(share / ref, ref / share))
    avg = float(np.mean(ratios)) if ratios else 1.0
    return ModeShareReport(shares=shares, reference=dict(reference), avg_ratio=avg)


def write_report(path, metrics: dict) -> None:
    """Flat metric name -> value report, JSON-formatted."""
    payload = {}
    for key, value in metrics.items():
        if isinstance(value, (np.floating, np.integer)):
            value = float(value)
        payload[key] = value
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
