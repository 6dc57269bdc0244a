"""Training losses over Siamese pair batches, with analytic gradients.

Three terms act on a batch of P pairs:

* a weighted parameter-distance cost on each member's predicted 62-vector,
  where each coordinate's weight is the landmark displacement that an error
  in that coordinate alone would cause (weights normalized to sum to 1);
* a contrastive loss on the 50-entry shape blocks of the two predictions,
  pulling genuine pairs together and pushing impostor pairs beyond a margin;
* the same contrastive loss on the two identity embeddings.

All loss values are sums over the batch.  Gradients treat the parameter
importance weights as constants (no gradient flows through them), and the
impostor hinge is one-sided: zero gradient at and beyond the margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .morphable import (
    PARAM_DIM,
    SHAPE_BLOCK_SLICE,
    MorphableBasis,
    reconstruct_shape,
    unpack,
)

# Below this total raw weight the prediction is treated as exact and the
# importance weights fall back to uniform.
DEGENERATE_WEIGHT_EPS = 1e-12


@dataclass
class WpdcWeights:
    """Normalized per-parameter importance weights (diagonal of Q)."""

    q: np.ndarray     # (62,) nonnegative, summing to 1
    degenerate: bool  # True when the uniform fallback was used

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (PARAM_DIM,):
            raise ValueError(f"weights must have {PARAM_DIM} entries, got shape {self.q.shape}")


@dataclass
class LossConfig:
    """Margin, per-term weights, and their shared per-epoch decay factor."""

    margin: float = 1.0
    w_3d: float = 1e-2
    w_shp: float = 1e-3
    w_id: float = 1e-4
    gamma: float = 0.95
    # Optional variants; both default to the plain formulation.
    symmetric_impostor: bool = False
    normalize_embeddings: bool = False

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        for name in ("w_3d", "w_shp", "w_id"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


@dataclass(eq=False)
class PairBatch:
    """P Siamese pairs after the forward pass: predictions, targets, labels."""

    x1_pred: np.ndarray  # (P, 62)
    x1_gt: np.ndarray    # (P, 62)
    x2_pred: np.ndarray  # (P, 62)
    x2_gt: np.ndarray    # (P, 62)
    embed1: np.ndarray   # (P, d)
    embed2: np.ndarray   # (P, d)
    labels: np.ndarray   # (P,) in {0, 1}

    def __post_init__(self):
        for name in ("x1_pred", "x1_gt", "x2_pred", "x2_gt", "embed1", "embed2"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        p = len(self.labels)
        for name in ("x1_pred", "x1_gt", "x2_pred", "x2_gt"):
            arr = getattr(self, name)
            if arr.shape != (p, PARAM_DIM):
                raise ValueError(f"{name}: expected shape ({p}, {PARAM_DIM}), got {arr.shape}")
        if self.embed1.shape[0] != p or self.embed2.shape[0] != p:
            raise ValueError("embeddings must have one row per pair")
        if self.embed1.shape[1] != self.embed2.shape[1]:
            raise ValueError(
                f"embeddings of unequal length: {self.embed1.shape[1]} vs {self.embed2.shape[1]}")
        if p and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 (impostor) or 1 (genuine)")

    def __len__(self) -> int:
        return len(self.labels)


def wpdc_weights(a_gt, a_pred, basis: MorphableBasis) -> WpdcWeights:
    """Importance of each parameter, from the landmark motion it controls.

    For parameter i, the raw weight is the Euclidean norm of the landmark
    displacement between the ground truth and the vector whose i-th entry
    alone is replaced by the prediction.  Landmark projection is linear in
    every single coordinate, so each displacement has a closed form; the
    result is identical to rebuilding each substituted vector and
    re-projecting.  Weights are normalized to sum to 1; if every raw weight
    vanishes the uniform fallback is returned with the degenerate flag set.
    """
    a_gt = np.asarray(a_gt, dtype=float)
    a_pred = np.asarray(a_pred, dtype=float)
    if a_gt.shape != (PARAM_DIM,) or a_pred.shape != (PARAM_DIM,):
        raise ValueError(
            f"parameter vectors must have {PARAM_DIM} entries, "
            f"got {a_gt.shape} and {a_pred.shape}")
    gt = unpack(a_gt)
    delta = np.abs(a_pred - a_gt)

    shape = reconstruct_shape(basis, gt.shape_coeffs, gt.expr_coeffs)
    points = shape.reshape(-1, 3)[basis.landmark_indices]      # (L, 3)
    n_landmarks = len(points)
    top_rows = gt.rotation[:2]                                 # Pr @ R

    raw = np.zeros(PARAM_DIM)
    # Scale: displacement is delta_f times the projected (unscaled) landmarks.
    raw[0] = delta[0] * np.linalg.norm(points @ top_rows.T)
    # Rotation entries: entry (j, k) moves output coordinate j by f * x_k per
    # landmark; the third rotation row is dropped by the projector and moves
    # nothing.
    point_col_norms = np.linalg.norm(points, axis=0)           # (3,)
    for j in range(2):
        for k in range(3):
            raw[1 + 3 * j + k] = delta[1 + 3 * j + k] * abs(gt.scale) * point_col_norms[k]
    # Translation: shifts one output coordinate of every landmark equally.
    raw[10:12] = delta[10:12] * np.sqrt(n_landmarks)
    # Coefficients: column c of the combined basis moves landmark l by
    # f * Pr * R * basis_rows(l) per unit of coefficient c.
    rows = np.concatenate([basis.shape_basis, basis.expression_basis], axis=1)
    rows = rows.reshape(-1, 3, 50)[basis.landmark_indices]     # (L, 3, 50)
    projected = np.einsum("ij,ljc->lic", top_rows, rows)       # (L, 2, 50)
    column_norms = np.sqrt(np.einsum("lic,lic->c", projected, projected))
    raw[12:] = delta[12:] * abs(gt.scale) * column_norms

    total = raw.sum()
    if total < DEGENERATE_WEIGHT_EPS:
        return WpdcWeights(np.full(PARAM_DIM, 1.0 / PARAM_DIM), True)
    return WpdcWeights(raw / total, False)


def wpdc_loss(a_gt, a_pred, weights) -> float:
    """Weighted squared parameter error: sum_i q_i (a_i - a^_i)^2."""
    a_gt = np.asarray(a_gt, dtype=float)
    a_pred = np.asarray(a_pred, dtype=float)
    q = weights.q if isinstance(weights, WpdcWeights) else np.asarray(weights, dtype=float)
    if a_gt.shape != (PARAM_DIM,) or a_pred.shape != (PARAM_DIM,) or q.shape != (PARAM_DIM,):
        raise ValueError(f"expected {PARAM_DIM}-entry vectors")
    diff = a_gt - a_pred
    return float(np.dot(q, diff * diff))


def _wpdc_weight_rows(gt_rows, pred_rows, basis: MorphableBasis):
    """Vectorized importance weights, one row per member; same closed forms
    as wpdc_weights."""
    n = len(gt_rows)
    if n == 0:
        return np.zeros((0, PARAM_DIM)), np.zeros(0, dtype=bool)
    delta = np.abs(pred_rows - gt_rows)
    scales = gt_rows[:, 0]
    rotations = gt_rows[:, 1:10].reshape(n, 3, 3)
    coeffs = gt_rows[:, 12:]

    landmark_rows = np.concatenate([basis.shape_basis, basis.expression_basis], axis=1)
    landmark_rows = landmark_rows.reshape(-1, 3, 50)[basis.landmark_indices]   # (L, 3, 50)
    n_landmarks = len(landmark_rows)
    mean_points = basis.mean_shape.reshape(-1, 3)[basis.landmark_indices]      # (L, 3)
    flat_rows = landmark_rows.reshape(-1, 50)                                  # (3L, 50)
    points = mean_points[None] + (coeffs @ flat_rows.T).reshape(n, n_landmarks, 3)
    top_rows = rotations[:, :2]                                                # (n, 2, 3)

    raw = np.zeros((n, PARAM_DIM))
    projected_points = points @ top_rows.transpose(0, 2, 1)                    # (n, L, 2)
    raw[:, 0] = delta[:, 0] * np.linalg.norm(projected_points.reshape(n, -1), axis=1)
    point_col_norms = np.linalg.norm(points, axis=1)                           # (n, 3)
    for j in range(2):
        raw[:, 1 + 3 * j: 4 + 3 * j] = (delta[:, 1 + 3 * j: 4 + 3 * j]
                                        * np.abs(scales)[:, None] * point_col_norms)
    raw[:, 10:12] = delta[:, 10:12] * np.sqrt(n_landmarks)
    # (n, 2, 3) @ (L, 3, 50) batched over members and landmarks.
    projected_cols = top_rows[:, None] @ landmark_rows[None]                   # (n, L, 2, 50)
    column_norms = np.sqrt(np.sum(projected_cols * projected_cols, axis=(1, 2)))
    raw[:, 12:] = delta[:, 12:] * np.abs(scales)[:, None] * column_norms

    totals = raw.sum(axis=1)
    degenerate = totals < DEGENERATE_WEIGHT_EPS
    safe = np.where(degenerate, 1.0, totals)
    rows = np.where(degenerate[:, None], 1.0 / PARAM_DIM, raw / safe[:, None])
    return rows, degenerate


def batch_wpdc_weights(batch: PairBatch, basis: MorphableBasis):
    """Importance weights for both members of every pair in the batch."""
    rows1, deg1 = _wpdc_weight_rows(batch.x1_gt, batch.x1_pred, basis)
    rows2, deg2 = _wpdc_weight_rows(batch.x2_gt, batch.x2_pred, basis)
    w1 = [WpdcWeights(rows1[j], bool(deg1[j])) for j in range(len(batch))]
    w2 = [WpdcWeights(rows2[j], bool(deg2[j])) for j in range(len(batch))]
    return w1, w2


def loss_3d(batch: PairBatch, basis: MorphableBasis, frozen_weights=None) -> float:
    """Sum of both members' weighted parameter-distance costs over all pairs.

    Each member gets weights computed fresh from its own prediction unless
    frozen_weights (a (w1, w2) pair of lists) is supplied, which evaluates
    the quadratic form that gradients are taken of.
    """
    w1, w2 = frozen_weights if frozen_weights is not None else batch_wpdc_weights(batch, basis)
    if not len(batch):
        return 0.0
    q1 = np.array([w.q for w in w1])
    q2 = np.array([w.q for w in w2])
    d1 = batch.x1_gt - batch.x1_pred
    d2 = batch.x2_gt - batch.x2_pred
    return float(np.sum(q1 * d1 * d1) + np.sum(q2 * d2 * d2))


def pair_distance(v1, v2) -> float:
    """Euclidean distance between two equally sized vectors."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if v1.shape != v2.shape:
        raise ValueError(f"vectors of unequal shape: {v1.shape} vs {v2.shape}")
    return float(np.linalg.norm(v1 - v2))


def contrastive_loss(d, y, margin, symmetric_impostor=False) -> float:
    """Genuine pairs pay half the squared distance; impostor pairs pay the
    squared hinge on (margin - distance).

    The impostor term carries no 1/2 factor by default; symmetric_impostor
    restores the halved variant.
    """
    if d < 0:
        raise ValueError(f"distance must be nonnegative, got {d}")
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    if y == 1:
        return 0.5 * d * d
    hinge = max(0.0, margin - d)
    value = hinge * hinge
    return 0.5 * value if symmetric_impostor else value


def _contrastive_sum(diffs, labels, margin, symmetric_impostor):
    distances = np.linalg.norm(diffs, axis=1)
    genuine = 0.5 * distances * distances
    hinge = np.maximum(0.0, margin - distances)
    impostor = hinge * hinge * (0.5 if symmetric_impostor else 1.0)
    return float(np.sum(np.where(labels == 1, genuine, impostor)))


def _normalized_rows(rows):
    norms = np.linalg.norm(rows, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return rows / safe[:, None], norms


def loss_shp(batch: PairBatch, margin, symmetric_impostor=False) -> float:
    """Contrastive loss summed over pairs, on the predicted shape blocks."""
    diffs = batch.x1_pred[:, SHAPE_BLOCK_SLICE] - batch.x2_pred[:, SHAPE_BLOCK_SLICE]
    return _contrastive_sum(diffs, batch.labels, margin, symmetric_impostor)


def loss_id(batch: PairBatch, margin, symmetric_impostor=False,
            normalize_embeddings=False) -> float:
    """Contrastive loss summed over pairs, on the identity embeddings."""
    e1, e2 = batch.embed1, batch.embed2
    if normalize_embeddings:
        e1, _ = _normalized_rows(e1)
        e2, _ = _normalized_rows(e2)
    return _contrastive_sum(e1 - e2, batch.labels, margin, symmetric_impostor)


def total_loss(batch: PairBatch, basis: MorphableBasis, cfg: LossConfig,
               frozen_weights=None):
    """Weighted sum of the three terms; parts are reported unweighted."""
    parts = {
        "l3d": loss_3d(batch, basis, frozen_weights=frozen_weights),
        "lshp": loss_shp(batch, cfg.margin, cfg.symmetric_impostor),
        "lid": loss_id(batch, cfg.margin, cfg.symmetric_impostor, cfg.normalize_embeddings),
    }
    total = cfg.w_3d * parts["l3d"] + cfg.w_shp * parts["lshp"] + cfg.w_id * parts["lid"]
    return float(total), parts


@dataclass(eq=False)
class LossGradients:
    """Gradients of the weighted total with respect to batch predictions."""

    x1_pred: np.ndarray  # (P, 62)
    x2_pred: np.ndarray  # (P, 62)
    embed1: np.ndarray   # (P, d)
    embed2: np.ndarray   # (P, d)


def grad_loss_3d(batch: PairBatch, basis: MorphableBasis, frozen_weights=None):
    """d(loss_3d)/d(predictions) with the importance weights held constant."""
    w1, w2 = frozen_weights if frozen_weights is not None else batch_wpdc_weights(batch, basis)
    q1 = np.array([w.q for w in w1]).reshape(len(batch), PARAM_DIM)
    q2 = np.array([w.q for w in w2]).reshape(len(batch), PARAM_DIM)
    g1 = 2.0 * q1 * (batch.x1_pred - batch.x1_gt)
    g2 = 2.0 * q2 * (batch.x2_pred - batch.x2_gt)
    return g1, g2


def _contrastive_row_grads(diffs, labels, margin, symmetric_impostor):
    """Per-row gradient of the contrastive term with respect to the first
    vector of each pair (the second is its negation)."""
    distances = np.linalg.norm(diffs, axis=1)
    grads = np.zeros_like(diffs)
    genuine = labels == 1
    grads[genuine] = diffs[genuine]
    active = (~genuine) & (distances > 0.0) & (distances < margin)
    if active.any():
        coeff = -2.0 * (margin - distances[active]) / distances[active]
        if symmetric_impostor:
            coeff = 0.5 * coeff
        grads[active] = coeff[:, None] * diffs[active]
    return grads


def grad_loss_shp(batch: PairBatch, margin, symmetric_impostor=False):
    """d(loss_shp)/d(predictions), nonzero only on the shape block."""
    diffs = batch.x1_pred[:, SHAPE_BLOCK_SLICE] - batch.x2_pred[:, SHAPE_BLOCK_SLICE]
    block = _contrastive_row_grads(diffs, batch.labels, margin, symmetric_impostor)
    g1 = np.zeros_like(batch.x1_pred)
    g2 = np.zeros_like(batch.x2_pred)
    g1[:, SHAPE_BLOCK_SLICE] = block
    g2[:, SHAPE_BLOCK_SLICE] = -block
    return g1, g2


def grad_loss_id(batch: PairBatch, margin, symmetric_impostor=False,
                 normalize_embeddings=False):
    """d(loss_id)/d(embeddings)."""
    if not normalize_embeddings:
        grads = _contrastive_row_grads(batch.embed1 - batch.embed2, batch.labels,
                                       margin, symmetric_impostor)
        return grads, -grads
    u1, n1 = _normalized_rows(batch.embed1)
    u2, n2 = _normalized_rows(batch.embed2)
    on_unit = _contrastive_row_grads(u1 - u2, batch.labels, margin, symmetric_impostor)

    def back(g, u, n):
        # Jacobian of v / |v|: (I - u u^T) / |v|; zero vectors get zero gradient.
        projected = g - np.sum(g * u, axis=1, keepdims=True) * u
        safe = np.where(n > 0.0, n, 1.0)
        return np.where((n > 0.0)[:, None], projected / safe[:, None], 0.0)

    return back(on_unit, u1, n1), back(-on_unit, u2, n2)


def grad_total_loss(batch: PairBatch, basis: MorphableBasis, cfg: LossConfig,
                    frozen_weights=None) -> LossGradients:
    """Analytic gradients of the weighted total loss for every prediction
    and embedding in the batch."""
    g3_1, g3_2 = grad_loss_3d(batch, basis, frozen_weights=frozen_weights)
    gs_1, gs_2 = grad_loss_shp(batch, cfg.margin, cfg.symmetric_impostor)
    gi_1, gi_2 = grad_loss_id(batch, cfg.margin, cfg.symmetric_impostor,
                              cfg.normalize_embeddings)
    return LossGradients(
        x1_pred=cfg.w_3d * g3_1 + cfg.w_shp * gs_1,
        x2_pred=cfg.w_3d * g3_2 + cfg.w_shp * gs_2,
        embed1=cfg.w_id * gi_1,
        embed2=cfg.w_id * gi_2,
    )
