"""Reconstruction-robustness and verification evaluation protocols.

Reconstruction: predicted and ground-truth shapes are rigidly aligned
(closed-form least squares on known correspondences, or nearest-neighbor
ICP for unmatched clouds), then scored by the normalized mean error in
percent of the ground-truth face bounding box.  Per-identity box
statistics and error distribution curves summarize robustness.

Verification: embedding distances over a fixed set of genuine/impostor
pairs, k-fold cross validation with the accuracy-maximizing threshold
chosen on the training folds, plus the pooled ROC sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._textio import write_lines
from .morphable import MorphableBasis, reconstruct_shape, unpack
from .regressor import RegressorModel, SiamesePair, forward
from .synthdata import Dataset

DISTANCE_MODES = ("euclidean", "normalized", "cosine")


@dataclass
class EvalRecord:
    identity_id: int
    pose_id: int
    nme_percent: float


@dataclass
class IdentityBoxStats:
    identity_id: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    iqr: float


@dataclass(eq=False)
class RocResult:
    fold_accuracies: np.ndarray  # (folds,)
    mean_accuracy: float
    roc_points: np.ndarray       # (n, 2) columns (fpr, tpr), sorted by fpr


def _as_points(shape, name):
    shape = np.asarray(shape, dtype=float)
    if shape.ndim != 1 or shape.size % 3 != 0:
        raise ValueError(f"{name} must be a flat (3N,) vector, got shape {shape.shape}")
    return shape.reshape(-1, 3)


def _kabsch(source, target):
    """Closed-form rotation + translation minimizing squared distances."""
    if len(source) < 3:
        raise ValueError(f"need at least 3 points to align, got {len(source)}")
    centroid_s = source.mean(axis=0)
    centroid_t = target.mean(axis=0)
    cross = (source - centroid_s).T @ (target - centroid_t)
    u, singular, vt = np.linalg.svd(cross)
    if singular[0] <= 0.0 or singular[1] <= 1e-12 * singular[0]:
        raise ValueError("degenerate point set: cross-covariance rank < 2")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = centroid_t - rotation @ centroid_s
    return rotation, translation


def rigid_align(source, target, mode="correspondence", max_iter=50, tol=1e-10):
    """Rigidly align source onto target (no scaling).

    mode "correspondence" solves the closed-form least-squares problem on
    index-matched points; mode "icp" alternates nearest-neighbor matching
    with the closed-form solve until the RMSE change drops below tol or
    max_iter is reached.  Returns (rotation, translation, aligned source)
    with the rotation proper orthonormal.
    """
    src = _as_points(source, "source")
    tgt = _as_points(target, "target")
    if mode == "correspondence":
        if src.shape != tgt.shape:
            raise ValueError(
                f"correspondence mode needs equal vertex counts, got {len(src)} and {len(tgt)}")
        rotation, translation = _kabsch(src, tgt)
        return rotation, translation, (src @ rotation.T + translation).reshape(-1)
    if mode != "icp":
        raise ValueError(f"mode must be 'correspondence' or 'icp', got '{mode}'")

    tree = cKDTree(tgt)
    rotation = np.eye(3)
    translation = np.zeros(3)
    aligned = src
    previous_rmse = np.inf
    for _ in range(int(max_iter)):
        _, matched = tree.query(aligned)
        rotation, translation = _kabsch(src, tgt[matched])
        aligned = src @ rotation.T + translation
        rmse = float(np.sqrt(np.mean(np.sum((aligned - tgt[matched]) ** 2, axis=1))))
        if abs(previous_rmse - rmse) < tol:
            break
        previous_rmse = rmse
    return rotation, translation, aligned.reshape(-1)


def nme(aligned, gt) -> float:
    """Mean per-vertex distance in percent of the ground-truth bounding box.

    The normalizer is sqrt(width * height) of the ground-truth shape's
    axis-aligned extent in the x-y plane.
    """
    a = _as_points(aligned, "aligned")
    g = _as_points(gt, "gt")
    if a.shape != g.shape:
        raise ValueError(f"vertex counts differ: {len(a)} vs {len(g)}")
    mean_distance = float(np.mean(np.linalg.norm(a - g, axis=1)))
    width = float(g[:, 0].max() - g[:, 0].min())
    height = float(g[:, 1].max() - g[:, 1].min())
    box = np.sqrt(width * height)
    if box <= 0.0:
        raise ValueError("ground-truth shape has a zero-area x-y bounding box")
    return 100.0 * mean_distance / box


def _param_predictor(model):
    if isinstance(model, RegressorModel):
        return lambda sample: forward(model, sample.observation).params_pred
    if callable(model):
        return model
    raise TypeError(f"model must be a RegressorModel or a callable, got {type(model)!r}")


def _embedder(model):
    if isinstance(model, RegressorModel):
        return lambda sample: forward(model, sample.observation).embedding
    if callable(model):
        return model
    raise TypeError(f"model must be a RegressorModel or a callable, got {type(model)!r}")


def reconstruction_eval(model, dataset, basis: MorphableBasis) -> list:
    """Per-sample NME records: predict, synthesize, align, score.

    model is a RegressorModel or a callable mapping a Sample to a 62-entry
    prediction (an oracle returning the ground truth gives all-zero NME).
    Shapes share topology, so alignment uses known correspondences.
    """
    samples = dataset.samples if isinstance(dataset, Dataset) else list(dataset)
    predict = _param_predictor(model)
    records = []
    for sample in samples:
        predicted = unpack(np.asarray(predict(sample), dtype=float))
        target = unpack(sample.params_gt)
        shape_pred = reconstruct_shape(basis, predicted.shape_coeffs, predicted.expr_coeffs)
        shape_gt = reconstruct_shape(basis, target.shape_coeffs, target.expr_coeffs)
        _, _, aligned = rigid_align(shape_pred, shape_gt, mode="correspondence")
        records.append(EvalRecord(sample.identity_id, sample.pose_id,
                                  nme(aligned, shape_gt)))
    return records


def per_identity_boxstats(records) -> list:
    """Five-number summary of NME per identity, quartiles by linear
    interpolation between order statistics."""
    groups = {}
    for record in records:
        groups.setdefault(record.identity_id, []).append(record.nme_percent)
    stats = []
    for identity in sorted(groups):
        values = np.asarray(groups[identity], dtype=float)
        q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
        stats.append(IdentityBoxStats(identity, float(values.min()), float(q1),
                                      float(median), float(q3), float(values.max()),
                                      float(q3 - q1)))
    return stats


def edc_curve(records, thresholds) -> list:
    """Cumulative fraction of records at or below each threshold."""
    thresholds = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be ascending")
    if not thresholds:
        return []
    if not records:
        raise ValueError("no records to evaluate")
    values = np.array([r.nme_percent for r in records])
    return [(t, float(np.mean(values <= t))) for t in thresholds]


def sample_verification_pairs(samples, n_genuine, n_impostor, rng) -> list:
    """Exact numbers of distinct genuine and impostor pairs, rng-driven."""
    samples = list(samples)
    groups = {}
    for index, sample in enumerate(samples):
        groups.setdefault(sample.identity_id, []).append(index)
    genuine_combos = []
    for identity in sorted(groups):
        members = groups[identity]
        genuine_combos.extend((a, b) for i, a in enumerate(members) for b in members[i + 1:])
    if n_genuine > len(genuine_combos):
        raise ValueError(
            f"dataset supports {len(genuine_combos)} distinct genuine pairs, "
            f"need {n_genuine}")
    total = len(samples)
    same_identity = sum(len(g) * (len(g) - 1) // 2 for g in groups.values())
    impostor_capacity = total * (total - 1) // 2 - same_identity
    if n_impostor > impostor_capacity:
        raise ValueError(
            f"dataset supports {impostor_capacity} distinct impostor pairs, "
            f"need {n_impostor}")

    chosen = rng.choice(len(genuine_combos), size=n_genuine, replace=False)
    pairs = [SiamesePair(samples[genuine_combos[i][0]], samples[genuine_combos[i][1]], 1)
             for i in chosen]
    seen = set()
    while len(seen) < n_impostor:
        a, b = rng.integers(total), rng.integers(total)
        if a == b or samples[a].identity_id == samples[b].identity_id:
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        pairs.append(SiamesePair(samples[key[0]], samples[key[1]], 0))
    return pairs


def _prefix_counts(distances, labels):
    order = np.argsort(distances, kind="stable")
    sorted_d = distances[order]
    sorted_y = labels[order]
    n = len(sorted_d)
    genuine_prefix = np.concatenate([[0], np.cumsum(sorted_y)])
    impostor_prefix = np.arange(n + 1) - genuine_prefix
    # Realizable cuts: before everything, between strictly increasing values,
    # after everything.
    valid = np.ones(n + 1, dtype=bool)
    valid[1:n] = sorted_d[1:] > sorted_d[:-1]
    return sorted_d, genuine_prefix, impostor_prefix, valid


def _best_threshold(distances, labels):
    """Accuracy-maximizing decision threshold for 'genuine iff d <= t'."""
    sorted_d, genuine_prefix, impostor_prefix, valid = _prefix_counts(distances, labels)
    n = len(sorted_d)
    total_impostor = impostor_prefix[-1]
    accuracy = (genuine_prefix + (total_impostor - impostor_prefix)) / n
    accuracy = np.where(valid, accuracy, -1.0)
    cut = int(np.argmax(accuracy))
    if cut == 0:
        return float(sorted_d[0] - 1.0)
    if cut == n:
        return float(sorted_d[-1] + 1.0)
    return float(0.5 * (sorted_d[cut - 1] + sorted_d[cut]))


def _accuracy(distances, labels, threshold) -> float:
    predicted = distances <= threshold
    return float(np.mean(predicted == (labels == 1)))


def _roc_points(distances, labels):
    sorted_d, genuine_prefix, impostor_prefix, valid = _prefix_counts(distances, labels)
    total_genuine = genuine_prefix[-1]
    total_impostor = impostor_prefix[-1]
    if total_genuine == 0 or total_impostor == 0:
        raise ValueError("ROC needs at least one genuine and one impostor pair")
    fpr = impostor_prefix[valid] / total_impostor
    tpr = genuine_prefix[valid] / total_genuine
    return np.column_stack([fpr, tpr])


def verification_eval(model, dataset, n_pairs=6000, n_genuine=3000, folds=10,
                      seed=0, distance="euclidean") -> RocResult:
    """K-fold verification accuracy plus the pooled ROC sweep.

    Draws n_genuine genuine and (n_pairs - n_genuine) impostor pairs,
    computes one embedding distance per pair, then for each fold picks the
    accuracy-maximizing threshold on the remaining folds and scores the
    held-out fold.
    """
    if distance not in DISTANCE_MODES:
        raise ValueError(f"distance must be one of {DISTANCE_MODES}, got '{distance}'")
    if folds < 1:
        raise ValueError(f"folds must be at least 1, got {folds}")
    if n_pairs < folds:
        raise ValueError(f"need at least as many pairs ({n_pairs}) as folds ({folds})")
    if not 1 <= n_genuine < n_pairs:
        raise ValueError("n_genuine must leave room for at least one impostor pair")
    samples = dataset.samples if isinstance(dataset, Dataset) else list(dataset)
    embed = _embedder(model)
    rng = np.random.default_rng(seed)
    pairs = sample_verification_pairs(samples, n_genuine, n_pairs - n_genuine, rng)

    first = np.stack([np.asarray(embed(p.first), dtype=float) for p in pairs])
    second = np.stack([np.asarray(embed(p.second), dtype=float) for p in pairs])
    if distance == "euclidean":
        distances = np.linalg.norm(first - second, axis=1)
    else:
        norm1 = np.linalg.norm(first, axis=1, keepdims=True)
        norm2 = np.linalg.norm(second, axis=1, keepdims=True)
        unit1 = np.divide(first, norm1, out=np.zeros_like(first), where=norm1 > 0)
        unit2 = np.divide(second, norm2, out=np.zeros_like(second), where=norm2 > 0)
        if distance == "normalized":
            distances = np.linalg.norm(unit1 - unit2, axis=1)
        else:
            distances = 1.0 - np.sum(unit1 * unit2, axis=1)
    labels = np.array([p.label for p in pairs])

    shuffle = rng.permutation(len(pairs))
    distances = distances[shuffle]
    labels = labels[shuffle]

    accuracies = []
    for fold_indices in np.array_split(np.arange(len(pairs)), folds):
        held_out = np.zeros(len(pairs), dtype=bool)
        held_out[fold_indices] = True
        threshold = _best_threshold(distances[~held_out], labels[~held_out])
        accuracies.append(_accuracy(distances[held_out], labels[held_out], threshold))
    accuracies = np.array(accuracies)
    return RocResult(accuracies, float(accuracies.mean()), _roc_points(distances, labels))


# --- result tables ---------------------------------------------------------

def _g9(value) -> str:
    return format(float(value), ".9g")


def write_records_csv(records, path) -> None:
    lines = ["identity_id,pose_id,nme_percent"]
    lines += [f"{r.identity_id},{r.pose_id},{_g9(r.nme_percent)}" for r in records]
    write_lines(path, lines)


def write_boxstats_csv(stats, path) -> None:
    lines = ["identity_id,min,q1,median,q3,max,iqr"]
    lines += [",".join([str(s.identity_id)] + [_g9(v) for v in
                                               (s.minimum, s.q1, s.median, s.q3,
                                                s.maximum, s.iqr)])
              for s in stats]
    write_lines(path, lines)


def write_edc_csv(curve, path) -> None:
    lines = ["threshold,fraction"]
    lines += [f"{_g9(t)},{_g9(f)}" for t, f in curve]
    write_lines(path, lines)


def write_roc_csv(result: RocResult, path) -> None:
    lines = ["fpr,tpr"]
    lines += [f"{_g9(fpr)},{_g9(tpr)}" for fpr, tpr in result.roc_points]
    write_lines(path, lines)


def write_fold_accuracies_csv(result: RocResult, path) -> None:
    lines = ["fold,accuracy"]
    lines += [f"{i + 1},{_g9(acc)}" for i, acc in enumerate(result.fold_accuracies)]
    lines.append(f"mean,{_g9(result.mean_accuracy)}")
    write_lines(path, lines)
