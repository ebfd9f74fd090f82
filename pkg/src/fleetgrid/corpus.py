"""Shared data model, CSV serialization, and scenario configuration.

All other modules exchange data through the record types defined here.
Coordinates are planar meters, times are minutes since midnight of the
simulated day (reservations may spill past minute 1440 for scheduling
purposes), distances driven are kilometers.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger("fleetgrid.corpus")

VEHICLE_CATEGORIES = ("Budget", "Combi", "Premium", "Transporter", "Other")
GENDERS = ("F", "M", "O")
PT_SUBSCRIPTIONS = ("none", "half_fare", "full_fare")
PURPOSES = ("home", "leisure", "work", "shopping", "education", "other")

DEFAULT_TIMESTEP_MINUTES = 15
DEFAULT_PRICE_LEVELS = (0.0, 10.0, 100.0, 500.0, 1000.0, 2000.0, 5000.0)

DAY_MINUTES = 1440


class DataError(ValueError):
    """Malformed file content or a violated record invariant."""


@dataclass
class Station:
    station_id: int
    x: float
    y: float
    vehicle_ids: list[int] = field(default_factory=list)
    grid_zone_id: int | None = None


@dataclass
class Vehicle:
    vehicle_id: int
    home_station: int
    category: str = "Other"
    battery_capacity: float = 40.0       # kWh
    max_charge_power: float = 11.0       # kW
    max_discharge_power: float = 11.0    # kW
    consumption: float = 0.18            # kWh/km
    soc_min: float = 0.1
    soc_max: float = 0.95


@dataclass
class Agent:
    agent_id: int
    age_group: int
    gender: str
    home_x: float
    home_y: float
    car_access: bool
    pt_subscription: str


@dataclass
class Trip:
    trip_id: int
    agent_id: int
    origin_x: float
    origin_y: float
    dest_x: float
    dest_y: float
    purpose_origin: str
    purpose_dest: str
    t_dest_start: int
    distance_m: float


@dataclass
class Reservation:
    reservation_id: int
    vehicle_id: int
    agent_id: int
    station_id: int
    t_start: int
    t_end: int
    drive_km: float


@dataclass
class ScenarioConfig:
    n_users: int
    v_desired: int
    k_new_stations: int = 0
    price_levels: tuple[float, ...] | None = None
    timestep_minutes: int | None = None
    seed: int = 0
    category_shares: dict[str, float] | None = None


@dataclass
class Dataset:
    """Bundle of all record collections plus the DSO load series."""

    stations: list[Station] = field(default_factory=list)
    vehicles: list[Vehicle] = field(default_factory=list)
    agents: list[Agent] = field(default_factory=list)
    trips: list[Trip] = field(default_factory=list)
    reservations: list[Reservation] = field(default_factory=list)
    dso_load: np.ndarray = field(default_factory=lambda: np.zeros(0))


def euclid(x0, y0, x1, y1):
    return math.hypot(x1 - x0, y1 - y0)


# ---------------------------------------------------------------------------
# validation

def _check_finite(value, what, record_id):
    if not math.isfinite(value):
        raise DataError(f"{what} of record {record_id} is not finite")


def validate_bundle(ds: Dataset) -> None:
    """Check all cross-record invariants; raises DataError naming the record."""
    station_ids = set()
    for s in ds.stations:
        if s.station_id in station_ids:
            raise DataError(f"duplicate station_id {s.station_id}")
        station_ids.add(s.station_id)
        _check_finite(s.x, "x", s.station_id)
        _check_finite(s.y, "y", s.station_id)

    vehicle_ids = set()
    vehicle_station = {}
    for v in ds.vehicles:
        if v.vehicle_id in vehicle_ids:
            raise DataError(f"duplicate vehicle_id {v.vehicle_id}")
        vehicle_ids.add(v.vehicle_id)
        vehicle_station[v.vehicle_id] = v.home_station
        if v.home_station not in station_ids:
            raise DataError(
                f"vehicle {v.vehicle_id} references unknown station {v.home_station}")
        if v.category not in VEHICLE_CATEGORIES:
            raise DataError(f"vehicle {v.vehicle_id} has unknown category {v.category!r}")
        if v.battery_capacity <= 0 or v.consumption <= 0:
            raise DataError(f"vehicle {v.vehicle_id} has nonpositive battery or consumption")
        if v.max_charge_power < 0 or v.max_discharge_power < 0:
            raise DataError(f"vehicle {v.vehicle_id} has negative power limit")
        if not (0 <= v.soc_min < v.soc_max <= 1):
            raise DataError(f"vehicle {v.vehicle_id} violates 0 <= soc_min < soc_max <= 1")

    agent_ids = set()
    for a in ds.agents:
        if a.agent_id in agent_ids:
            raise DataError(f"duplicate agent_id {a.agent_id}")
        agent_ids.add(a.agent_id)
        if not 1 <= a.age_group <= 6:
            raise DataError(f"agent {a.agent_id} age_group {a.age_group} outside 1..6")
        if a.gender not in GENDERS:
            raise DataError(f"agent {a.agent_id} has unknown gender {a.gender!r}")
        if a.pt_subscription not in PT_SUBSCRIPTIONS:
            raise DataError(f"agent {a.agent_id} has unknown pt_subscription")

    trip_ids = set()
    for t in ds.trips:
        if t.trip_id in trip_ids:
            raise DataError(f"duplicate trip_id {t.trip_id}")
        trip_ids.add(t.trip_id)
        if t.agent_id not in agent_ids:
            raise DataError(f"trip {t.trip_id} references unknown agent {t.agent_id}")
        if t.purpose_origin not in PURPOSES or t.purpose_dest not in PURPOSES:
            raise DataError(f"trip {t.trip_id} has unknown purpose")
        if t.distance_m < 0:
            raise DataError(f"trip {t.trip_id} has negative distance")
        # beeline convention: stored distance must match coordinates within 1 m
        d = euclid(t.origin_x, t.origin_y, t.dest_x, t.dest_y)
        if abs(d - t.distance_m) > 1.0:
            raise DataError(
                f"trip {t.trip_id} distance {t.distance_m:.1f} deviates from "
                f"beeline {d:.1f} by more than 1 m")

    res_ids = set()
    by_vehicle: dict[int, list[Reservation]] = {}
    for r in ds.reservations:
        if r.reservation_id in res_ids:
            raise DataError(f"duplicate reservation_id {r.reservation_id}")
        res_ids.add(r.reservation_id)
        if r.t_start >= r.t_end:
            raise DataError(f"reservation {r.reservation_id} has t_start >= t_end")
        if r.drive_km < 0:
            raise DataError(f"reservation {r.reservation_id} has negative drive_km")
        if ds.vehicles and r.vehicle_id not in vehicle_ids:
            raise DataError(
                f"reservation {r.reservation_id} references unknown vehicle {r.vehicle_id}")
        if ds.agents and r.agent_id not in agent_ids:
            raise DataError(
                f"reservation {r.reservation_id} references unknown agent {r.agent_id}")
        if ds.stations and r.station_id not in station_ids:
            raise DataError(
                f"reservation {r.reservation_id} references unknown station {r.station_id}")
        by_vehicle.setdefault(r.vehicle_id, []).append(r)
    for vid, rs in by_vehicle.items():
        rs = sorted(rs, key=lambda r: r.t_start)
        for a, b in zip(rs, rs[1:]):
            if b.t_start < a.t_end:
                raise DataError(
                    f"vehicle {vid}: reservations {a.reservation_id} and "
                    f"{b.reservation_id} overlap")


# ---------------------------------------------------------------------------
# CSV input

def _parse(value, kind, path, line_no, col):
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind is bool:
            if value in ("0", "1"):
                return value == "1"
            if value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise ValueError(value)
    except ValueError:
        raise DataError(
            f"{os.path.basename(path)}:{line_no}: column '{col}': "
            f"cannot parse {value!r} as {kind.__name__}") from None
    return value


def _read_rows(path, columns):
    """Yield (line_no, row dict) from a CSV file, checking the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{os.path.basename(path)}:1: empty file, expected header")
        if header != list(columns):
            raise DataError(
                f"{os.path.basename(path)}:1: header {header} does not match "
                f"expected {list(columns)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise DataError(
                    f"{os.path.basename(path)}:{line_no}: expected "
                    f"{len(columns)} fields, found {len(row)}")
            yield line_no, dict(zip(columns, row))


STATION_COLUMNS = ("station_id", "x", "y", "grid_zone_id")
VEHICLE_COLUMNS = ("vehicle_id", "station_id", "category", "battery_kwh",
                   "max_charge_kw", "max_discharge_kw", "consumption_kwh_per_km",
                   "soc_min", "soc_max")
AGENT_COLUMNS = ("agent_id", "age_group", "gender", "home_x", "home_y",
                 "car_access", "pt_subscription")
TRIP_COLUMNS = ("trip_id", "agent_id", "origin_x", "origin_y", "dest_x", "dest_y",
                "purpose_origin", "purpose_dest", "t_dest_start", "distance_m")
RESERVATION_COLUMNS = ("reservation_id", "vehicle_id", "agent_id", "station_id",
                       "t_start", "t_end", "drive_km")
DSO_COLUMNS = ("timestep_index", "load_mw")


def load_dataset(path: str) -> Dataset:
    """Load all CSV files found in `path`; missing files yield empty collections."""
    ds = Dataset()

    p = os.path.join(path, "stations.csv")
    if os.path.exists(p):
        for ln, row in _read_rows(p, STATION_COLUMNS):
            gz = row["grid_zone_id"]
            ds.stations.append(Station(
                station_id=_parse(row["station_id"], int, p, ln, "station_id"),
                x=_parse(row["x"], float, p, ln, "x"),
                y=_parse(row["y"], float, p, ln, "y"),
                grid_zone_id=None if gz == "" else _parse(gz, int, p, ln, "grid_zone_id"),
            ))

    p = os.path.join(path, "vehicles.csv")
    if os.path.exists(p):
        for ln, row in _read_rows(p, VEHICLE_COLUMNS):
            ds.vehicles.append(Vehicle(
                vehicle_id=_parse(row["vehicle_id"], int, p, ln, "vehicle_id"),
                home_station=_parse(row["station_id"], int, p, ln, "station_id"),
                category=row["category"],
                battery_capacity=_parse(row["battery_kwh"], float, p, ln, "battery_kwh"),
                max_charge_power=_parse(row["max_charge_kw"], float, p, ln, "max_charge_kw"),
                max_discharge_power=_parse(row["max_discharge_kw"], float, p, ln,
                                           "max_discharge_kw"),
                consumption=_parse(row["consumption_kwh_per_km"], float, p, ln,
                                   "consumption_kwh_per_km"),
                soc_min=_parse(row["soc_min"], float, p, ln, "soc_min"),
                soc_max=_parse(row["soc_max"], float, p, ln, "soc_max"),
            ))

    p = os.path.join(path, "agents.csv")
    if os.path.exists(p):
        for ln, row in _read_rows(p, AGENT_COLUMNS):
            ds.agents.append(Agent(
                agent_id=_parse(row["agent_id"], int, p, ln, "agent_id"),
                age_group=_parse(row["age_group"], int, p, ln, "age_group"),
                gender=row["gender"],
                home_x=_parse(row["home_x"], float, p, ln, "home_x"),
                home_y=_parse(row["home_y"], float, p, ln, "home_y"),
                car_access=_parse(row["car_access"], bool, p, ln, "car_access"),
                pt_subscription=row["pt_subscription"],
            ))

    p = os.path.join(path, "trips.csv")
    if os.path.exists(p):
        for ln, row in _read_rows(p, TRIP_COLUMNS):
            ds.trips.append(Trip(
                trip_id=_parse(row["trip_id"], int, p, ln, "trip_id"),
                agent_id=_parse(row["agent_id"], int, p, ln, "agent_id"),
                origin_x=_parse(row["origin_x"], float, p, ln, "origin_x"),
                origin_y=_parse(row["origin_y"], float, p, ln, "origin_y"),
                dest_x=_parse(row["dest_x"], float, p, ln, "dest_x"),
                dest_y=_parse(row["dest_y"], float, p, ln, "dest_y"),
                purpose_origin=row["purpose_origin"],
                purpose_dest=row["purpose_dest"],
                t_dest_start=_parse(row["t_dest_start"], int, p, ln, "t_dest_start"),
                distance_m=_parse(row["distance_m"], float, p, ln, "distance_m"),
            ))

    p = os.path.join(path, "reservations.csv")
    if os.path.exists(p):
        for ln, row in _read_rows(p, RESERVATION_COLUMNS):
            ds.reservations.append(Reservation(
                reservation_id=_parse(row["reservation_id"], int, p, ln, "reservation_id"),
                vehicle_id=_parse(row["vehicle_id"], int, p, ln, "vehicle_id"),
                agent_id=_parse(row["agent_id"], int, p, ln, "agent_id"),
                station_id=_parse(row["station_id"], int, p, ln, "station_id"),
                t_start=_parse(row["t_start"], int, p, ln, "t_start"),
                t_end=_parse(row["t_end"], int, p, ln, "t_end"),
                drive_km=_parse(row["drive_km"], float, p, ln, "drive_km"),
            ))

    p = os.path.join(path, "dso_load.csv")
    if os.path.exists(p):
        loads = []
        for ln, row in _read_rows(p, DSO_COLUMNS):
            idx = _parse(row["timestep_index"], int, p, ln, "timestep_index")
            if idx != len(loads):
                raise DataError(
                    f"dso_load.csv:{ln}: column 'timestep_index': expected "
                    f"{len(loads)}, found {idx}")
            loads.append(_parse(row["load_mw"], float, p, ln, "load_mw"))
        ds.dso_load = np.asarray(loads)

    # attach vehicle pools to stations
    by_station: dict[int, list[int]] = {}
    for v in ds.vehicles:
        by_station.setdefault(v.home_station, []).append(v.vehicle_id)
    for s in ds.stations:
        s.vehicle_ids = sorted(by_station.get(s.station_id, []))

    validate_bundle(ds)
    return ds


# ---------------------------------------------------------------------------
# CSV output

def _fmt(value) -> str:
    """Deterministic shortest round-trip text for a field value."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_dataset(path: str, ds: Dataset) -> None:
    """Write the bundle as CSV files; output is byte-stable for a fixed bundle."""
    validate_bundle(ds)
    os.makedirs(path, exist_ok=True)
    _write_csv(os.path.join(path, "stations.csv"), STATION_COLUMNS,
               [(s.station_id, s.x, s.y,
                 "" if s.grid_zone_id is None else s.grid_zone_id)
                for s in ds.stations])
    _write_csv(os.path.join(path, "vehicles.csv"), VEHICLE_COLUMNS,
               [(v.vehicle_id, v.home_station, v.category, v.battery_capacity,
                 v.max_charge_power, v.max_discharge_power, v.consumption,
                 v.soc_min, v.soc_max)
                for v in ds.vehicles])
    _write_csv(os.path.join(path, "agents.csv"), AGENT_COLUMNS,
               [(a.agent_id, a.age_group, a.gender, a.home_x, a.home_y,
                 a.car_access, a.pt_subscription)
                for a in ds.agents])
    _write_csv(os.path.join(path, "trips.csv"), TRIP_COLUMNS,
               [(t.trip_id, t.agent_id, t.origin_x, t.origin_y, t.dest_x, t.dest_y,
                 t.purpose_origin, t.purpose_dest, t.t_dest_start, t.distance_m)
                for t in ds.trips])
    _write_csv(os.path.join(path, "reservations.csv"), RESERVATION_COLUMNS,
               [(r.reservation_id, r.vehicle_id, r.agent_id, r.station_id,
                 r.t_start, r.t_end, r.drive_km)
                for r in ds.reservations])
    _write_csv(os.path.join(path, "dso_load.csv"), DSO_COLUMNS,
               [(i, float(v)) for i, v in enumerate(ds.dso_load)])


# ---------------------------------------------------------------------------
# scenario configuration

def validate_scenario(config: ScenarioConfig) -> ScenarioConfig:
    """Fill defaults and reject invalid counts; returns a normalized copy."""
    if config.n_users <= 0:
        raise DataError(f"n_users must be positive, got {config.n_users}")
    if config.v_desired <= 0:
        raise DataError(f"v_desired must be positive, got {config.v_desired}")
    if config.k_new_stations < 0:
        raise DataError(f"k_new_stations must be nonnegative, got {config.k_new_stations}")

    timestep = config.timestep_minutes
    if timestep is None:
        timestep = DEFAULT_TIMESTEP_MINUTES
    if timestep <= 0 or DAY_MINUTES % timestep != 0:
        raise DataError(f"timestep_minutes must divide {DAY_MINUTES}, got {timestep}")

    prices = config.price_levels
    if prices is None:
        prices = DEFAULT_PRICE_LEVELS
    prices = tuple(float(p) for p in prices)
    if any(p < 0 for p in prices):
        raise DataError("price levels must be nonnegative")

    shares = config.category_shares
    if shares is None:
        shares = {"Budget": 0.35, "Combi": 0.3, "Premium": 0.15,
                  "Transporter": 0.1, "Other": 0.1}
    for cat in shares:
        if cat not in VEHICLE_CATEGORIES:
            raise DataError(f"unknown vehicle category {cat!r} in category_shares")
    total = sum(shares.values())
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"category_shares sum to {total}, expected 1")

    return replace(config, timestep_minutes=timestep, price_levels=prices,
                   category_shares=dict(shares))


def load_scenario(path: str) -> ScenarioConfig:
    """Read a flat JSON scenario file and normalize it."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {"n_users", "v_desired", "k_new_stations", "price_levels",
             "timestep_minutes", "seed", "category_shares"}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown scenario keys: {sorted(unknown)}")
    if "n_users" not in raw or "v_desired" not in raw:
        raise DataError("scenario file must define n_users and v_desired")
    cfg = ScenarioConfig(
        n_users=int(raw["n_users"]),
        v_desired=int(raw["v_desired"]),
        k_new_stations=int(raw.get("k_new_stations", 0)),
        price_levels=tuple(raw["price_levels"]) if "price_levels" in raw else None,
        timestep_minutes=raw.get("timestep_minutes"),
        seed=int(raw.get("seed", 0)),
        category_shares=raw.get("category_shares"),
    )
    return validate_scenario(cfg)


def save_scenario(path: str, config: ScenarioConfig) -> None:
    cfg = validate_scenario(config)
    payload = {
        "n_users": cfg.n_users,
        "v_desired": cfg.v_desired,
        "k_new_stations": cfg.k_new_stations,
        "price_levels": list(cfg.price_levels),
        "timestep_minutes": cfg.timestep_minutes,
        "seed": cfg.seed,
        "category_shares": cfg.category_shares,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
