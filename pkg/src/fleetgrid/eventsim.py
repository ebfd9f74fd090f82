"""Event-based booking baseline: fit hourly distributions, sample days.

Booking behaviour is summarized by 48 slots (hour of day x weekday/weekend),
each holding a Poisson booking rate per half hour, a categorical
distribution over stations, and two positive continuous distributions of
the form p(x) ~ x^k exp(-lambda x) for duration and distance.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, polygamma

log = logging.getLogger("fleetgrid.eventsim")

MINUTES_PER_DAY = 1440
HALF_HOURS_PER_DAY = 48


@dataclass
class ExpPowerParams:
    """Density x^k * exp(-lambda x) up to normalization (a Gamma with
    shape k+1 and rate lambda)."""

    lam: float
    k: float

    @property
    def mean(self) -> float:
        return (self.k + 1.0) / self.lam

    def sample(self, rng, size=None):
        return rng.gamma(self.k + 1.0, 1.0 / self.lam, size=size)


def fit_exp_power(samples, fix_k=None) -> ExpPowerParams:
    """Maximum likelihood fit of the x^k exp(-lambda x) family.

    Newton iteration on the shape equation log(a) - digamma(a) = s with a
    method-of-moments start; `fix_k` pins the exponent (fix_k=0 reduces to
    an exponential fit with lambda = 1/mean). k is clamped at 0.
    """
    x = np.asarray(samples, dtype=float)
    if np.any(x <= 0):
        raise ValueError("samples must be strictly positive")
    if fix_k is not None:
        if fix_k < 0:
            raise ValueError("fix_k must be >= 0")
        shape = fix_k + 1.0
        return ExpPowerParams(lam=shape / float(x.mean()), k=float(fix_k))
    if len(x) < 20:
        raise ValueError(f"need at least 20 samples, got {len(x)}")

    mean = float(x.mean())
    s = math.log(mean) - float(np.log(x).mean())
    if s < 1e-10:
        raise ValueError("degenerate (near-constant) samples, variance too small")

    # method-of-moments start, then Newton on log(a) - digamma(a) = s
    a = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(60):
        f = math.log(a) - digamma(a) - s
        fp = 1.0 / a - polygamma(1, a)
        step = f / fp
        a_new = a - step
        if a_new <= 0:
            a_new = a / 2.0
        if abs(a_new - a) < 1e-12 * max(1.0, a):
            a = a_new
            break
        a = a_new

    k = max(a - 1.0, 0.0)
    shape = k + 1.0
    return ExpPowerParams(lam=shape / mean, k=k)


@dataclass
class SlotDistribution:
    poisson_rate: float  # expected bookings per half-hour draw
    station_ids: np.ndarray
    station_probs: np.ndarray
    duration: ExpPowerParams
    distance: ExpPowerParams
    inherited: bool = False


@dataclass
class EventDistributionSet:
    slots: dict[tuple[int, bool], SlotDistribution] = field(default_factory=dict)

    def slot(self, hour: int, is_weekend: bool) -> SlotDistribution:
        return self.slots[(hour, bool(is_weekend))]


@dataclass
class Booking:
    station_id: int
    t_start: float  # minutes from day start
    duration_min: float
    distance_km: float


def fit_event_distributions(reservations, calendar, station_ids=None,
                            smoothing=0.5, min_fit_samples=20) -> EventDistributionSet:
    """Fit all 48 slots from a multi-day reservation log.

    `calendar` maps day index (t_start // 1440) to an is_weekend flag and
    must cover both day types. Slots with too little data inherit the
    pooled all-day fit and are flagged.
    """
    if not reservations:
        raise ValueError("reservation log is empty")
    calendar = [bool(b) for b in calendar]
    if not any(calendar) or all(calendar):
        raise ValueError("calendar must contain at least one weekday and one "
                         "weekend day")
    n_days = {False: calendar.count(False), True: calendar.count(True)}

    if station_ids is None:
        station_ids = sorted({r.station_id for r in reservations})
    station_ids = np.asarray(sorted(int(s) for s in station_ids))
    sindex = {int(s): i for i, s in enumerate(station_ids)}

    counts = {}
    durations = {}
    distances = {}
    station_counts = {}
    all_durations, all_distances = [], []
    for r in reservations:
        day = int(r.t_start) // MINUTES_PER_DAY
        if day >= len(calendar):
            raise ValueError(f"reservation {r.reservation_id} on day {day} "
                             "outside the calendar")
        hour = (int(r.t_start) % MINUTES_PER_DAY) // 60
        key = (hour, calendar[day])
        counts[key] = counts.get(key, 0) + 1
        duration = float(r.t_end - r.t_start)
        if duration > 0:
            durations.setdefault(key, []).append(duration)
            all_durations.append(duration)
        if r.drive_km > 0:
            distances.setdefault(key, []).append(float(r.drive_km))
            all_distances.append(float(r.drive_km))
        sc = station_counts.setdefault(key, np.zeros(len(station_ids)))
        sc[sindex[int(r.station_id)]] += 1

    global_duration = fit_exp_power(all_durations)
    global_distance = fit_exp_power(all_distances)

    out = EventDistributionSet()
    for hour in range(24):
        for weekend in (False, True):
            key = (hour, weekend)
            rate = counts.get(key, 0) / (2.0 * n_days[weekend])
            sc = station_counts.get(key, np.zeros(len(station_ids)))
            probs = (sc + smoothing) / (sc.sum() + smoothing * len(station_ids))

            dur_samples = durations.get(key, [])
            dist_samples = distances.get(key, [])
            inherited = (len(dur_samples) < min_fit_samples
                         or len(dist_samples) < min_fit_samples)
            if inherited:
                log.warning("slot hour=%d weekend=%s has %d/%d samples; "
                            "inheriting the all-day fit", hour, weekend,
                            len(dur_samples), len(dist_samples))
                duration = global_duration
                distance = global_distance
            else:
                duration = fit_exp_power(dur_samples)
                distance = fit_exp_power(dist_samples)
            out.slots[key] = SlotDistribution(
                poisson_rate=rate, station_ids=station_ids,
                station_probs=probs, duration=duration, distance=distance,
                inherited=inherited)
    return out


def sample_day(dist: EventDistributionSet, is_weekend, seed=0) -> list[Booking]:
    """Draw one synthetic booking day from the fitted distributions.

    Booking counts are drawn per half hour from the enclosing hour's slot;
    vehicles are not assigned.
    """
    rng = np.random.default_rng(seed)
    bookings: list[Booking] = []
    for half in range(HALF_HOURS_PER_DAY):
        slot = dist.slot(half // 2, is_weekend)
        n = int(rng.poisson(slot.poisson_rate))
        if n == 0:
            continue
        stations = rng.choice(slot.station_ids, size=n, p=slot.station_probs)
        offsets = rng.uniform(0.0, 30.0, size=n)
        dur = slot.duration.sample(rng, n)
        dist_km = slot.distance.sample(rng, n)
        for i in range(n):
            bookings.append(Booking(
                station_id=int(stations[i]),
                t_start=half * 30.0 + float(offsets[i]),
                duration_min=float(dur[i]),
                distance_km=float(dist_km[i])))
    return bookings


# ---------------------------------------------------------------------------
# persistence

def write_distributions(dist_path, stations_path, dist: EventDistributionSet):
    with open(dist_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["hour", "is_weekend", "poisson_rate", "duration_lambda",
                         "duration_k", "distance_lambda", "distance_k"])
        for hour in range(24):
            for weekend in (False, True):
                s = dist.slot(hour, weekend)
                writer.writerow([hour, int(weekend), repr(s.poisson_rate),
                                 repr(s.duration.lam), repr(s.duration.k),
                                 repr(s.distance.lam), repr(s.distance.k)])
    with open(stations_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["hour", "is_weekend", "station_id", "prob"])
        for hour in range(24):
            for weekend in (False, True):
                s = dist.slot(hour, weekend)
                for sid, p in zip(s.station_ids, s.station_probs):
                    writer.writerow([hour, int(weekend), int(sid), repr(float(p))])


def read_distributions(dist_path, stations_path) -> EventDistributionSet:
    station_rows: dict[tuple[int, bool], list[tuple[int, float]]] = {}
    with open(stations_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (int(row["hour"]), bool(int(row["is_weekend"])))
            station_rows.setdefault(key, []).append(
                (int(row["station_id"]), float(row["prob"])))

    out = EventDistributionSet()
    with open(dist_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (int(row["hour"]), bool(int(row["is_weekend"])))
            pairs = station_rows.get(key, [])
            out.slots[key] = SlotDistribution(
                poisson_rate=float(row["poisson_rate"]),
                station_ids=np.array([p[0] for p in pairs]),
                station_probs=np.array([p[1] for p in pairs]),
                duration=ExpPowerParams(float(row["duration_lambda"]),
                                        float(row["duration_k"])),
                distance=ExpPowerParams(float(row["distance_lambda"]),
                                        float(row["distance_k"])))
    return out
