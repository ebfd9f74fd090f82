"""Discrete-event simulation of station-based car sharing reservations.

Trips are processed in order of their mode decision time. An agent without
a vehicle asks the mode choice model whether to book the closest available
one; an agent holding a vehicle keeps it (forced car sharing) until a trip
returns to the location where the rental started. Rentals still open at the
end of the day are force-returned at minute 1440.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass

from .corpus import DAY_MINUTES, Reservation, euclid
from .modechoice import extract_features, predict_mode

log = logging.getLogger("fleetgrid.agentsim")

SPEED_KMH = 50.0
DECISION_BUFFER_MIN = 10.0
RETURN_TOLERANCE_M = 1.0


def compute_decision_time(trip) -> float:
    """Mode decision time: activity start minus travel time minus buffer.

    Travel time assumes 50 km/h; negative results clamp to 0.
    """
    if trip.distance_m < 0:
        raise ValueError(f"trip {trip.trip_id} has negative distance")
    t = trip.t_dest_start - (trip.distance_m / 1000.0 / SPEED_KMH) * 60.0 \
        - DECISION_BUFFER_MIN
    if t < 0:
        log.warning("trip %d decision time %.1f clamped to 0", trip.trip_id, t)
        return 0.0
    return t


@dataclass
class RawReservation:
    """One rented trip segment, before temporal merging."""

    agent_id: int
    vehicle_id: int
    station_id: int
    t_start: float
    t_end: float
    drive_km: float
    forced_return: bool = False


@dataclass
class _Holding:
    vehicle_id: int
    station_id: int
    pickup_x: float
    pickup_y: float
    t_last: float  # segment start of the next raw record


@dataclass
class SimLogEntry:
    trip_id: int
    t_decision: float
    predicted_mode: str
    station_distance_m: float


class SimulationError(RuntimeError):
    pass


def simulate_reservations(trips, agents, stations, vehicles, model, seed=0,
                          pt_grid=None, weekday=2, sampling="argmax",
                          carsharing_label="CarSharing"):
    """Run the booking simulation for one day.

    Returns (raw_reservations, sim_log). The model must expose the
    `GbtModel` interface; deterministic given fixed inputs and seed.
    """
    agents_by_id = {a.agent_id: a for a in agents}

    # idle vehicles per station, kept sorted so the lowest id is taken first
    idle: dict[int, list[int]] = {s.station_id: [] for s in stations}
    vehicle_station = {}
    for v in sorted(vehicles, key=lambda v: v.vehicle_id):
        idle[v.home_station].append(v.vehicle_id)
        vehicle_station[v.vehicle_id] = v.home_station

    station_by_id = {s.station_id: s for s in stations}
    holdings: dict[int, _Holding] = {}
    pending_returns: list[tuple[float, int, int]] = []  # (time, vehicle, station)
    raw: list[RawReservation] = []
    sim_log: list[SimLogEntry] = []

    order = sorted(trips, key=lambda t: (compute_decision_time(t), t.trip_id))

    def release_until(now):
        while pending_returns and pending_returns[0][0] <= now:
            _, vid, sid = heapq.heappop(pending_returns)
            idle[sid].append(vid)
            idle[sid].sort()

    for trip in order:
        t_decision = compute_decision_time(trip)
        release_until(t_decision)
        agent = agents_by_id.get(trip.agent_id)
        if agent is None:
            raise SimulationError(f"trip {trip.trip_id} references unknown agent")

        holding = holdings.get(trip.agent_id)
        if holding is None:
            available = {sid for sid, pool in idle.items() if pool}
            features = extract_features(trip, agent, stations, available,
                                        t_decision, pt_grid=pt_grid,
                                        weekday=weekday)
            try:
                mode, _ = predict_mode(model, features, sampling=sampling,
                                       seed=seed + trip.trip_id)
            except Exception as err:
                raise SimulationError(
                    f"mode prediction failed for trip {trip.trip_id}: {err}"
                ) from err
            sim_log.append(SimLogEntry(trip.trip_id, t_decision, mode,
                                       float(features[15])))
            if mode != carsharing_label or not available:
                continue
            # closest available station, ties by station id
            sid = min(available, key=lambda s: (
                euclid(trip.origin_x, trip.origin_y,
                       station_by_id[s].x, station_by_id[s].y), s))
            vid = idle[sid].pop(0)
            holdings[trip.agent_id] = _Holding(
                vehicle_id=vid, station_id=sid,
                pickup_x=trip.origin_x, pickup_y=trip.origin_y,
                t_last=t_decision)
            holding = holdings[trip.agent_id]
        else:
            sim_log.append(SimLogEntry(trip.trip_id, t_decision,
                                       carsharing_label, 0.0))

        # the agent drives this trip with the held vehicle
        segment_end = float(trip.t_dest_start)
        raw.append(RawReservation(
            agent_id=trip.agent_id, vehicle_id=holding.vehicle_id,
            station_id=holding.station_id,
            t_start=holding.t_last, t_end=max(segment_end, holding.t_last + 1e-9),
            drive_km=trip.distance_m / 1000.0))
        holding.t_last = segment_end

        returned = euclid(trip.dest_x, trip.dest_y, holding.pickup_x,
                          holding.pickup_y) <= RETURN_TOLERANCE_M
        if returned:
            heapq.heappush(pending_returns,
                           (segment_end, holding.vehicle_id, holding.station_id))
            del holdings[trip.agent_id]

    # force-return any vehicle still held at day end
    for agent_id in sorted(holdings):
        holding = holdings[agent_id]
        raw.append(RawReservation(
            agent_id=agent_id, vehicle_id=holding.vehicle_id,
            station_id=holding.station_id,
            t_start=holding.t_last, t_end=float(DAY_MINUTES),
            drive_km=0.0, forced_return=True))

    return raw, sim_log


def merge_reservations(raw, start_id=0) -> list[Reservation]:
    """Coalesce touching segments of the same agent and vehicle.

    Merged start times floor to whole minutes, end times ceil; a vehicle
    serving two agents at once indicates a simulator bug and raises.
    """
    groups: dict[tuple[int, int], list[RawReservation]] = {}
    for r in raw:
        groups.setdefault((r.agent_id, r.vehicle_id), []).append(r)

    merged: list[Reservation] = []
    for (agent_id, vehicle_id), segments in sorted(groups.items()):
        segments = sorted(segments, key=lambda r: r.t_start)
        current = None
        for seg in segments:
            if current is not None and seg.t_start <= current["t_end"] + 1e-9:
                current["t_end"] = max(current["t_end"], seg.t_end)
                current["km"] += seg.drive_km
            else:
                if current is not None:
                    merged.append(_finish(current))
                current = {"agent": agent_id, "vehicle": vehicle_id,
                           "station": seg.station_id, "t_start": seg.t_start,
                           "t_end": seg.t_end, "km": seg.drive_km}
        if current is not None:
            merged.append(_finish(current))

    merged.sort(key=lambda r: (r.t_start, r.vehicle_id, r.agent_id))
    out = []
    for i, r in enumerate(merged):
        out.append(Reservation(reservation_id=start_id + i,
                               vehicle_id=r.vehicle_id, agent_id=r.agent_id,
                               station_id=r.station_id, t_start=r.t_start,
                               t_end=r.t_end, drive_km=r.drive_km))

    by_vehicle: dict[int, list[Reservation]] = {}
    for r in out:
        by_vehicle.setdefault(r.vehicle_id, []).append(r)
    for vid, rs in by_vehicle.items():
        rs = sorted(rs, key=lambda r: r.t_start)
        for a, b in zip(rs, rs[1:]):
            if b.t_start < a.t_end:
                raise SimulationError(
                    f"vehicle {vid} double-booked by agents {a.agent_id} and "
                    f"{b.agent_id}: [{a.t_start}, {a.t_end}) overlaps "
                    f"[{b.t_start}, {b.t_end})")
    return out


def _finish(current) -> Reservation:
    t_start = int(math.floor(current["t_start"]))
    t_end = int(math.ceil(current["t_end"]))
    if t_end <= t_start:
        t_end = t_start + 1
    return Reservation(reservation_id=-1, vehicle_id=current["vehicle"],
                       agent_id=current["agent"], station_id=current["station"],
                       t_start=t_start, t_end=t_end,
                       drive_km=current["km"])
