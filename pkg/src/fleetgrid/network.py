"""Fleet scaling and new-station placement for scenario construction."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger("fleetgrid.network")

FLEET_TOLERANCE = 0.005
MAX_RESAMPLE_ROUNDS = 10_000


@dataclass
class FleetScalePlan:
    v_desired: int
    scale_factor: float
    station_ids: list[int]
    multipliers: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def scale_fleet(station_counts, v_desired, sigma=0.3, seed=0) -> FleetScalePlan:
    """Scale per-station vehicle counts to a target total fleet size.

    Each station's count is multiplied by a draw from Normal(c, sigma) with
    c = v_desired / current total, rounded and clamped at 0. The whole plan
    is resampled until the total lands within 0.5% of v_desired.

    `station_counts`: sequence of (station_id, current_count).
    """
    if v_desired <= 0:
        raise ValueError("v_desired must be positive")
    station_ids = [int(sid) for sid, _ in station_counts]
    current = np.array([c for _, c in station_counts], dtype=float)
    v_current = current.sum()
    if v_current <= 0:
        raise ValueError("current fleet is empty")
    c = v_desired / v_current

    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESAMPLE_ROUNDS):
        multipliers = rng.normal(c, sigma, size=len(current))
        counts = np.maximum(np.round(multipliers * current), 0.0)
        total = counts.sum()
        if abs(total - v_desired) / v_desired < FLEET_TOLERANCE:
            return FleetScalePlan(v_desired=v_desired, scale_factor=c,
                                  station_ids=station_ids,
                                  multipliers=multipliers,
                                  counts=counts.astype(int))
    raise RuntimeError(
        f"fleet scaling did not reach {v_desired} +-0.5% within "
        f"{MAX_RESAMPLE_ROUNDS} rounds")


def assign_vehicle_categories(n, category_shares, seed=0):
    """Draw a category per new vehicle from the configured share map."""
    if not category_shares:
        raise ValueError("category share map is empty")
    cats = sorted(category_shares)
    p = np.array([category_shares[c] for c in cats], dtype=float)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"category shares sum to {p.sum()}, expected 1")
    rng = np.random.default_rng(seed)
    return [str(c) for c in rng.choice(np.array(cats), size=n, p=p)]


def _assign_points(points, centers):
    """Index of the closest center for every point (squared Euclidean)."""
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1), d2


def clustering_objective(points, centers) -> float:
    """Sum over points of the squared distance to the closest center."""
    _, d2 = _assign_points(points, centers)
    return float(d2.min(axis=1).sum())


def place_new_stations(home_locations, k, fixed_stations, seed=0,
                       max_iter=200, tol=1e-3, init=None):
    """Place `k` new stations among fixed ones by a constrained Lloyd iteration.

    Points are assigned to the nearest center among fixed stations and the k
    movable centers; only movable centers are updated to their assignment
    means. A movable center that loses all points is re-seeded at the point
    farthest from every current center. Stops when the largest center
    displacement falls below `tol` meters.

    Returns a (k, d) array of new station coordinates.
    """
    X = np.asarray(home_locations, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    fixed = np.asarray(fixed_stations, dtype=float)
    if fixed.ndim == 1:
        fixed = fixed[:, None]
    if fixed.size == 0:
        fixed = np.zeros((0, X.shape[1]))
    if k < 0 or k > len(X):
        raise ValueError(f"need 0 <= k <= |X|, got k={k}, |X|={len(X)}")
    if k == 0:
        return np.zeros((0, X.shape[1]))

    rng = np.random.default_rng(seed)
    if init is not None:
        mu = np.asarray(init, dtype=float).reshape(k, X.shape[1]).copy()
    else:
        mu = X[rng.choice(len(X), size=k, replace=False)].copy()

    n_fixed = len(fixed)
    for _ in range(max_iter):
        centers = np.vstack([fixed, mu])
        assign, d2 = _assign_points(X, centers)
        nearest_d2 = d2[np.arange(len(X)), assign]

        new_mu = mu.copy()
        for j in range(k):
            mask = assign == n_fixed + j
            if mask.any():
                new_mu[j] = X[mask].mean(axis=0)
            else:
                new_mu[j] = X[np.argmax(nearest_d2)]
        shift = np.sqrt(((new_mu - mu) ** 2).sum(axis=1)).max()
        mu = new_mu
        if shift < tol:
            break
    return mu
