"""Synthetic base population and stratified subscriber sampling.

The base population replaces an external census pipeline with a parametric
generator: home locations come from a Gaussian mixture over population
centers and daily trip chains come from activity templates. Subscriber
sampling weights each person by how prevalent their age group, gender, and
nearest station are among reference subscribers relative to the reference
general population.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Agent, GENDERS, PT_SUBSCRIPTIONS, PURPOSES, Trip, euclid

log = logging.getLogger("fleetgrid.population")


@dataclass
class PopulationStats:
    """Stratum counts for reference subscribers (u) and general population (q).

    Keys are age groups 1..6, gender codes, and station ids.
    """

    u_age: dict[int, float] = field(default_factory=dict)
    q_age: dict[int, float] = field(default_factory=dict)
    u_gender: dict[str, float] = field(default_factory=dict)
    q_gender: dict[str, float] = field(default_factory=dict)
    u_station: dict[int, float] = field(default_factory=dict)
    q_station: dict[int, float] = field(default_factory=dict)


@dataclass
class ActivityTemplate:
    """One daily activity chain: purposes plus start-hour parameters.

    The chain starts and ends at home; `start_hours` gives (mean, std) hours
    for each non-home activity and for the final return home. Displacement of
    each new activity from the previous location is lognormal (log-meters).
    """

    purposes: tuple[str, ...]
    start_hours: tuple[tuple[float, float], ...]
    displacement_mu: float = 8.7318
    displacement_sigma: float = 1.15
    weight: float = 1.0

    def __post_init__(self):
        if self.purposes[0] != "home" or self.purposes[-1] != "home":
            raise ValueError("activity chain must start and end at home")
        for p in self.purposes:
            if p not in PURPOSES:
                raise ValueError(f"unknown purpose {p!r}")
        if len(self.start_hours) != len(self.purposes) - 1:
            raise ValueError("need one start-hour entry per non-initial activity")


# displacement_mu is calibrated so that exp(mu + sigma^2/2) ~ 12 km mean trip length
DEFAULT_TEMPLATES = (
    ActivityTemplate(("home", "work", "home"),
                     ((8.0, 1.0), (17.5, 1.5)), weight=0.34),
    ActivityTemplate(("home", "leisure", "home"),
                     ((17.0, 2.5), (21.0, 1.5)), weight=0.22),
    ActivityTemplate(("home", "work", "leisure", "home"),
                     ((8.0, 1.0), (17.5, 1.0), (21.5, 1.0)), weight=0.14),
    ActivityTemplate(("home", "shopping", "home"),
                     ((13.5, 3.0), (16.0, 2.0)), weight=0.12),
    ActivityTemplate(("home", "education", "home"),
                     ((8.5, 1.0), (16.5, 1.5)), weight=0.08),
    ActivityTemplate(("home", "other", "home"),
                     ((12.0, 4.0), (18.0, 2.5)), weight=0.06),
    ActivityTemplate(("home", "work", "shopping", "home"),
                     ((8.0, 1.0), (17.0, 1.0), (19.0, 1.0)), weight=0.04),
)

AGE_GROUP_SHARES = (0.10, 0.22, 0.22, 0.20, 0.15, 0.11)
GENDER_SHARES = (0.495, 0.49, 0.015)
PT_SUBSCRIPTION_SHARES = (0.55, 0.33, 0.12)
CAR_ACCESS_RATE = 0.72


@dataclass
class PopulationCenter:
    x: float
    y: float
    sigma_m: float
    weight: float


DEFAULT_CENTERS = (
    PopulationCenter(80_000.0, 120_000.0, 9_000.0, 0.30),
    PopulationCenter(160_000.0, 90_000.0, 7_000.0, 0.22),
    PopulationCenter(40_000.0, 60_000.0, 6_000.0, 0.18),
    PopulationCenter(210_000.0, 140_000.0, 8_000.0, 0.17),
    PopulationCenter(120_000.0, 40_000.0, 10_000.0, 0.13),
)


def generate_base_population(n, stations=None, templates=DEFAULT_TEMPLATES,
                             seed=0, centers=DEFAULT_CENTERS,
                             start_agent_id=0, start_trip_id=0):
    """Generate `n` agents with home locations and one day of trips each.

    Returns (agents, trips). Deterministic for a fixed seed. `stations` is
    accepted for interface symmetry but home placement only uses `centers`.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not templates:
        raise ValueError("template set must not be empty")
    rng = np.random.default_rng(seed)

    centers = list(centers)
    cw = np.array([c.weight for c in centers], dtype=float)
    cw = cw / cw.sum()
    tw = np.array([t.weight for t in templates], dtype=float)
    tw = tw / tw.sum()

    agents: list[Agent] = []
    trips: list[Trip] = []
    trip_id = start_trip_id

    center_idx = rng.choice(len(centers), size=n, p=cw)
    age_groups = rng.choice(np.arange(1, 7), size=n, p=AGE_GROUP_SHARES)
    genders = rng.choice(np.array(GENDERS), size=n, p=GENDER_SHARES)
    subs = rng.choice(np.array(PT_SUBSCRIPTIONS), size=n, p=PT_SUBSCRIPTION_SHARES)
    car_access = rng.random(n) < CAR_ACCESS_RATE
    template_idx = rng.choice(len(templates), size=n, p=tw)

    for i in range(n):
        c = centers[center_idx[i]]
        home_x = float(rng.normal(c.x, c.sigma_m))
        home_y = float(rng.normal(c.y, c.sigma_m))
        agent = Agent(agent_id=start_agent_id + i, age_group=int(age_groups[i]),
                      gender=str(genders[i]), home_x=home_x, home_y=home_y,
                      car_access=bool(car_access[i]),
                      pt_subscription=str(subs[i]))
        agents.append(agent)

        tpl = templates[template_idx[i]]
        locs = [(home_x, home_y)]
        for purpose in tpl.purposes[1:-1]:
            dist = float(rng.lognormal(tpl.displacement_mu, tpl.displacement_sigma))
            angle = float(rng.uniform(0.0, 2.0 * math.pi))
            px, py = locs[-1]
            locs.append((px + dist * math.cos(angle), py + dist * math.sin(angle)))
        locs.append((home_x, home_y))

        # activity start times, forced strictly increasing with a 30 min gap
        times = []
        prev = 0.0
        for mean_h, std_h in tpl.start_hours:
            t = rng.normal(mean_h * 60.0, std_h * 60.0)
            t = max(t, prev + 30.0)
            t = min(t, 1439.0)
            times.append(t)
            prev = t

        for k in range(len(tpl.purposes) - 1):
            ox, oy = locs[k]
            dx, dy = locs[k + 1]
            trips.append(Trip(
                trip_id=trip_id, agent_id=agent.agent_id,
                origin_x=ox, origin_y=oy, dest_x=dx, dest_y=dy,
                purpose_origin=tpl.purposes[k], purpose_dest=tpl.purposes[k + 1],
                t_dest_start=int(round(times[k])),
                distance_m=euclid(ox, oy, dx, dy),
            ))
            trip_id += 1

    return agents, trips


def station_coords(stations) -> tuple[np.ndarray, np.ndarray]:
    """Station ids (sorted ascending) and matching coordinate array."""
    ordered = sorted(stations, key=lambda s: s.station_id)
    ids = np.array([s.station_id for s in ordered], dtype=int)
    xy = np.array([[s.x, s.y] for s in ordered], dtype=float).reshape(-1, 2)
    return ids, xy


def nearest_station(x, y, stations):
    """Closest station to (x, y); ties broken by smallest station_id."""
    if not stations:
        raise ValueError("station set is empty")
    ids, xy = station_coords(stations)
    d2 = (xy[:, 0] - x) ** 2 + (xy[:, 1] - y) ** 2
    i = int(np.argmin(d2))  # first minimum = smallest id, ids are sorted
    return int(ids[i]), float(math.sqrt(d2[i]))


def nearest_station_many(points: np.ndarray, stations, chunk=4096):
    """Vectorized nearest_station for an (n, 2) array of points."""
    if not stations:
        raise ValueError("station set is empty")
    ids, xy = station_coords(stations)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    out_id = np.empty(len(points), dtype=int)
    out_d = np.empty(len(points), dtype=float)
    for lo in range(0, len(points), chunk):
        block = points[lo:lo + chunk]
        d2 = ((block[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
        imin = np.argmin(d2, axis=1)
        out_id[lo:lo + chunk] = ids[imin]
        out_d[lo:lo + chunk] = np.sqrt(d2[np.arange(len(block)), imin])
    return out_id, out_d


def stats_from_members(u_agents, q_agents, stations) -> PopulationStats:
    """Build PopulationStats by counting strata in explicit member lists."""
    stats = PopulationStats()

    def count(agents, age, gender, station):
        pts = np.array([[a.home_x, a.home_y] for a in agents], dtype=float)
        sids, _ = nearest_station_many(pts, stations) if len(agents) else (np.zeros(0, int), None)
        for a, sid in zip(agents, sids):
            age[a.age_group] = age.get(a.age_group, 0) + 1
            gender[a.gender] = gender.get(a.gender, 0) + 1
            station[int(sid)] = station.get(int(sid), 0) + 1

    count(u_agents, stats.u_age, stats.u_gender, stats.u_station)
    count(q_agents, stats.q_age, stats.q_gender, stats.q_station)
    return stats


def compute_sampling_weights(q_syn_agents, stats: PopulationStats, stations):
    """Per-agent subscriber sampling weights, normalized to sum to 1.

    The raw weight multiplies three prevalence ratios (subscribers over
    general population) for the agent's age group, gender, and nearest
    station. Strata with a zero denominator contribute weight 0.
    """
    n = len(q_syn_agents)
    if n == 0:
        raise ValueError("no agents to weight")
    pts = np.array([[a.home_x, a.home_y] for a in q_syn_agents], dtype=float)
    sids, _ = nearest_station_many(pts, stations)

    raw = np.zeros(n)
    zero_strata = 0
    for i, a in enumerate(q_syn_agents):
        qa = stats.q_age.get(a.age_group, 0)
        qg = stats.q_gender.get(a.gender, 0)
        qs = stats.q_station.get(int(sids[i]), 0)
        if qa == 0 or qg == 0 or qs == 0:
            zero_strata += 1
            continue
        raw[i] = (stats.u_age.get(a.age_group, 0) / qa
                  * stats.u_gender.get(a.gender, 0) / qg
                  * stats.u_station.get(int(sids[i]), 0) / qs)
    if zero_strata:
        log.warning("%d agents fall in strata absent from the reference "
                    "population; their weight is 0", zero_strata)
    total = raw.sum()
    if total == 0:
        raise ValueError("all sampling weights are zero; no sampleable population")
    return raw / total


def sample_carsharing_users(agents, weights, n, seed=0):
    """Sample `n` subscribers without replacement, proportional to weights."""
    weights = np.asarray(weights, dtype=float)
    if len(agents) != len(weights):
        raise ValueError("agents and weights length mismatch")
    positive = int(np.count_nonzero(weights > 0))
    if n > positive:
        raise ValueError(f"cannot sample {n} users from {positive} agents "
                         "with positive weight")
    rng = np.random.default_rng(seed)
    p = weights / weights.sum()
    idx = rng.choice(len(agents), size=n, replace=False, p=p)
    idx = np.sort(idx)
    return [agents[i] for i in idx]
