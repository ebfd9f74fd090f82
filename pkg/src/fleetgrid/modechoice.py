"""Trip feature extraction and the transport mode classifier.

Features combine trip geometry, activity purposes, daytime, agent
sociodemographics, and accessibility (public transport score plus distance
to the closest station that currently has an idle vehicle). The classifier
is a gradient boosted tree ensemble with the tree depth tuned on a held-out
validation split.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import GENDERS, PT_SUBSCRIPTIONS, PURPOSES
from .gbt import GradientBoostedTrees, Tree, softmax

log = logging.getLogger("fleetgrid.modechoice")

MODES = ("Car", "CarSharing", "Train", "Bus", "Tram", "Bicycle", "Walk", "Other")

NO_STATION_SENTINEL_M = 50_000.0

FEATURE_NAMES = (
    ("distance_m",)
    + tuple(f"purpose_origin_{p}" for p in PURPOSES)
    + tuple(f"purpose_dest_{p}" for p in PURPOSES)
    + ("pt_accessibility_origin", "pt_accessibility_dest",
       "distance_to_station_origin_m", "distance_to_station_dest_m",
       "origin_hour", "origin_day", "dest_hour", "dest_day", "age_group")
    + tuple(f"gender_{g}" for g in GENDERS)
    + ("car_access",)
    + tuple(f"pt_subscription_{s}" for s in PT_SUBSCRIPTIONS)
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass
class AccessibilityGrid:
    """Public transport accessibility scores (0..4) on a regular grid."""

    x0: float
    y0: float
    cell_m: float
    scores: np.ndarray  # (ny, nx) integer scores

    def score(self, x, y) -> int:
        iy = int(np.clip(round((y - self.y0) / self.cell_m), 0,
                         self.scores.shape[0] - 1))
        ix = int(np.clip(round((x - self.x0) / self.cell_m), 0,
                         self.scores.shape[1] - 1))
        return int(self.scores[iy, ix])


def flat_accessibility(score=2) -> AccessibilityGrid:
    return AccessibilityGrid(0.0, 0.0, 1.0, np.full((1, 1), score))


def _station_distance(x, y, stations, available_ids):
    best = None
    for s in stations:
        if s.station_id not in available_ids:
            continue
        d = ((s.x - x) ** 2 + (s.y - y) ** 2) ** 0.5
        if best is None or d < best:
            best = d
    return NO_STATION_SENTINEL_M if best is None else best


def extract_features(trip, agent, stations, available_station_ids,
                     decision_time, pt_grid=None, weekday=2) -> np.ndarray:
    """Feature vector for one trip at its mode decision time.

    `available_station_ids` holds the stations with at least one idle
    vehicle; when none exists the station distance falls back to a large
    sentinel instead of erroring.
    """
    if pt_grid is None:
        pt_grid = flat_accessibility()
    f = np.zeros(N_FEATURES)
    f[0] = trip.distance_m
    f[1 + PURPOSES.index(trip.purpose_origin)] = 1.0
    f[7 + PURPOSES.index(trip.purpose_dest)] = 1.0
    f[13] = pt_grid.score(trip.origin_x, trip.origin_y)
    f[14] = pt_grid.score(trip.dest_x, trip.dest_y)
    f[15] = _station_distance(trip.origin_x, trip.origin_y, stations,
                              available_station_ids)
    f[16] = _station_distance(trip.dest_x, trip.dest_y, stations,
                              available_station_ids)
    f[17] = int(decision_time // 60) % 24
    f[18] = weekday
    f[19] = int(trip.t_dest_start // 60) % 24
    f[20] = weekday
    f[21] = agent.age_group
    f[22 + GENDERS.index(agent.gender)] = 1.0
    f[25] = 1.0 if agent.car_access else 0.0
    f[26 + PT_SUBSCRIPTIONS.index(agent.pt_subscription)] = 1.0
    return f


@dataclass
class GbtModel:
    ensemble: GradientBoostedTrees
    classes: tuple[str, ...]
    max_depth: int
    feature_names: tuple[str, ...] = FEATURE_NAMES
    validation_scores: dict[int, float] = field(default_factory=dict)

    def feature_importances(self) -> np.ndarray:
        return self.ensemble.feature_importances()


def balanced_accuracy(y_true, y_pred, n_classes) -> float:
    """Mean of per-class recalls over the classes present in y_true."""
    recalls = []
    for k in range(n_classes):
        mask = y_true == k
        if mask.any():
            recalls.append(float((y_pred[mask] == k).mean()))
    return float(np.mean(recalls))


def train_gbt(features, labels, max_depth_grid=(2, 3, 4, 6),
              validation_fraction=0.2, seed=0, classes=None,
              learning_rate=0.1, n_rounds=200, min_samples_leaf=10) -> GbtModel:
    """Fit the classifier, tuning max_depth by validation balanced accuracy.

    The winning depth is refitted on the full data. `classes` fixes the
    class ordering; by default the sorted unique labels are used.
    """
    X = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if classes is None:
        classes = tuple(str(c) for c in np.unique(labels))
    else:
        classes = tuple(str(c) for c in classes)
    if len(classes) < 2:
        raise ValueError("training data must contain at least 2 classes")
    if len(X) < 50:
        raise ValueError(f"need at least 50 samples, got {len(X)}")
    class_index = {c: i for i, c in enumerate(classes)}
    try:
        y = np.array([class_index[str(l)] for l in labels])
    except KeyError as err:
        raise ValueError(f"label {err} missing from class list") from None

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(X))
    n_val = max(1, int(round(validation_fraction * len(X))))
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    scores: dict[int, float] = {}
    best_depth = None
    for depth in max_depth_grid:
        model = GradientBoostedTrees(
            n_classes=len(classes), learning_rate=learning_rate,
            n_rounds=n_rounds, max_depth=depth,
            min_samples_leaf=min_samples_leaf)
        model.fit(X[train_idx], y[train_idx])
        score = balanced_accuracy(y[val_idx], model.predict(X[val_idx]),
                                  len(classes))
        scores[depth] = score
        if best_depth is None or score > scores[best_depth]:
            best_depth = depth
    log.info("max_depth grid scores: %s -> selected %d", scores, best_depth)

    final = GradientBoostedTrees(
        n_classes=len(classes), learning_rate=learning_rate,
        n_rounds=n_rounds, max_depth=best_depth,
        min_samples_leaf=min_samples_leaf)
    final.fit(X, y)
    return GbtModel(ensemble=final, classes=classes, max_depth=best_depth,
                    feature_names=tuple(FEATURE_NAMES) if X.shape[1] == N_FEATURES
                    else tuple(f"f{i}" for i in range(X.shape[1])),
                    validation_scores=scores)


def predict_mode(model: GbtModel, features, sampling="argmax", seed=None):
    """Predict modes and class probabilities for one or many feature rows.

    `sampling="argmax"` picks the most likely class (ties resolve to the
    earlier class in the model's class list); `"categorical"` draws from the
    predicted distribution.
    """
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    probs = model.ensemble.predict_proba(X)
    if sampling == "argmax":
        idx = np.argmax(probs, axis=1)
    elif sampling == "categorical":
        rng = np.random.default_rng(seed)
        cum = np.cumsum(probs, axis=1)
        u = rng.random(len(X))
        idx = (u[:, None] < cum).argmax(axis=1)
    else:
        raise ValueError(f"unknown sampling policy {sampling!r}")
    modes = [model.classes[i] for i in idx]
    if single:
        return modes[0], probs[0]
    return modes, probs


@dataclass
class ModelReport:
    accuracy: float
    balanced_accuracy: float
    confusion: np.ndarray
    confusion_by_true: np.ndarray
    confusion_by_pred: np.ndarray
    importances: np.ndarray
    mode_shares: dict[str, float]


def evaluate_model(model: GbtModel, features, labels) -> ModelReport:
    X = np.asarray(features, dtype=float)
    if len(X) == 0:
        raise ValueError("test set is empty")
    class_index = {c: i for i, c in enumerate(model.classes)}
    y = np.array([class_index[str(l)] for l in np.asarray(labels)])
    pred = model.ensemble.predict(X)
    k = len(model.classes)

    confusion = np.zeros((k, k))
    np.add.at(confusion, (y, pred), 1.0)
    row = confusion.sum(axis=1, keepdims=True)
    col = confusion.sum(axis=0, keepdims=True)
    by_true = np.divide(confusion, row, out=np.zeros_like(confusion), where=row > 0)
    by_pred = np.divide(confusion, col, out=np.zeros_like(confusion), where=col > 0)

    shares = {c: float((pred == i).mean()) for i, c in enumerate(model.classes)}
    return ModelReport(
        accuracy=float((pred == y).mean()),
        balanced_accuracy=balanced_accuracy(y, pred, k),
        confusion=confusion,
        confusion_by_true=by_true,
        confusion_by_pred=by_pred,
        importances=model.feature_importances(),
        mode_shares=shares,
    )


# ---------------------------------------------------------------------------
# model and corpus serialization

MODEL_FORMAT = "fleetgrid-gbt 1"


def save_model(path: str, model: GbtModel) -> None:
    ens = model.ensemble
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_FORMAT + "\n")
        fh.write("classes " + ",".join(model.classes) + "\n")
        fh.write(f"learning_rate {ens.learning_rate!r}\n")
        fh.write(f"n_rounds {ens.n_rounds}\n")
        fh.write(f"max_depth {model.max_depth}\n")
        fh.write(f"min_samples_leaf {ens.min_samples_leaf}\n")
        fh.write(f"reg_lambda {ens.reg_lambda!r}\n")
        fh.write(f"n_features {ens.n_features}\n")
        fh.write("feature_names " + ",".join(model.feature_names) + "\n")
        fh.write("feature_gain " + " ".join(repr(float(g)) for g in ens.feature_gain)
                 + "\n")
        for r, round_trees in enumerate(ens.trees):
            for k, tree in enumerate(round_trees):
                fh.write(f"tree {r} {k} {len(tree.feature)}\n")
                for i in range(len(tree.feature)):
                    fh.write(f"{tree.feature[i]} {tree.threshold[i]!r} "
                             f"{tree.left[i]} {tree.right[i]} {tree.value[i]!r}\n")
        fh.write("end\n")


def load_model(path: str) -> GbtModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")

    header = {}
    i = 1
    while not lines[i].startswith("tree ") and lines[i] != "end":
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1

    classes = tuple(header["classes"].split(","))
    ens = GradientBoostedTrees(
        n_classes=len(classes),
        learning_rate=float(header["learning_rate"]),
        n_rounds=int(header["n_rounds"]),
        max_depth=int(header["max_depth"]),
        min_samples_leaf=int(header["min_samples_leaf"]),
        reg_lambda=float(header["reg_lambda"]))
    ens.n_features = int(header["n_features"])
    ens.feature_gain = np.array([float(v) for v in header["feature_gain"].split()])

    trees: dict[tuple[int, int], Tree] = {}
    while lines[i] != "end":
        _, r, k, n_nodes = lines[i].split()
        tree = Tree()
        for j in range(int(n_nodes)):
            f, thr, l, rgt, val = lines[i + 1 + j].split()
            tree.feature.append(int(f))
            tree.threshold.append(float(thr))
            tree.left.append(int(l))
            tree.right.append(int(rgt))
            tree.value.append(float(val))
        trees[(int(r), int(k))] = tree
        i += 1 + int(n_nodes)

    n_rounds_stored = max((r for r, _ in trees), default=-1) + 1
    ens.trees = [[trees[(r, k)] for k in range(len(classes))]
                 for r in range(n_rounds_stored)]
    names = tuple(header["feature_names"].split(",")) if header["feature_names"] \
        else tuple(f"f{i}" for i in range(ens.n_features))
    return GbtModel(ensemble=ens, classes=classes,
                    max_depth=int(header["max_depth"]), feature_names=names)


def write_labeled_trips(path: str, features, labels) -> None:
    X = np.asarray(features, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(FEATURE_NAMES) + ["mode"])
        for row, label in zip(X, labels):
            writer.writerow([repr(float(v)) for v in row] + [str(label)])


def read_labeled_trips(path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != list(FEATURE_NAMES) + ["mode"]:
            raise ValueError(f"{path}: unexpected labeled trips header")
        rows, labels = [], []
        for row in reader:
            rows.append([float(v) for v in row[:-1]])
            labels.append(row[-1])
    return np.array(rows), np.array(labels)
