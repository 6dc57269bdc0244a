"""Shared-weight regressor with two heads, and its two-stage SGD trainer.

The backbone is a small fully connected network over the observation
vector (noisy flattened landmarks).  A common trunk feeds two parallel
affine heads: a 62-entry parameter prediction and a d-dimensional identity
embedding.  The Siamese property is structural: one model is applied to
both members of a pair.

Training runs in two stages.  Stage 1 updates with the weighted
parameter-distance term only; stage 2 adds the contrastive shape and
identity terms.  The three per-term weights act as learning rates for
plain SGD and share one exponential per-epoch decay anchored at the start
of training, so their ratios stay fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._textio import LineReader, real_line, write_lines
from .losses import (
    LossConfig,
    PairBatch,
    batch_wpdc_weights,
    grad_loss_3d,
    grad_loss_id,
    grad_loss_shp,
    loss_3d,
    loss_id,
    loss_shp,
)
from .morphable import PARAM_DIM, SHAPE_BLOCK_SLICE, MorphableBasis
from .synthdata import Dataset, Sample

_MODEL_MAGIC = "regressor-model 1"
_WEIGHTS_PER_LINE = 8

ACTIVATIONS = {
    # name -> (value, derivative as a function of the activated value)
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
}


class TrainingDiverged(RuntimeError):
    """Raised when a loss term becomes non-finite during training."""


def _affine_shapes(layer_sizes, embed_dim):
    shapes = [(b, a) for a, b in zip(layer_sizes[:-1], layer_sizes[1:])]
    shapes.append((PARAM_DIM, layer_sizes[-1]))
    shapes.append((embed_dim, layer_sizes[-1]))
    return shapes


def weight_count(layer_sizes, embed_dim) -> int:
    return sum(rows * cols + rows for rows, cols in _affine_shapes(layer_sizes, embed_dim))


@dataclass(eq=False)
class RegressorModel:
    """Trunk layer sizes, head widths, activation tag, and the flat weights."""

    layer_sizes: tuple
    embed_dim: int
    activation: str
    weights: np.ndarray

    def __post_init__(self):
        self.layer_sizes = tuple(int(v) for v in self.layer_sizes)
        self.embed_dim = int(self.embed_dim)
        if not self.layer_sizes or any(v < 1 for v in self.layer_sizes):
            raise ValueError(f"layer_sizes must be positive integers, got {self.layer_sizes}")
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{self.activation}'")
        self.weights = np.asarray(self.weights, dtype=float)
        expected = weight_count(self.layer_sizes, self.embed_dim)
        if self.weights.shape != (expected,):
            raise ValueError(
                f"weights: expected {expected} entries for layer_sizes={self.layer_sizes} "
                f"embed_dim={self.embed_dim}, got shape {self.weights.shape}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def copy(self) -> "RegressorModel":
        return RegressorModel(self.layer_sizes, self.embed_dim, self.activation,
                              self.weights.copy())


@dataclass
class RegressorOutput:
    """Both heads for one observation; the shape block is a view."""

    params_pred: np.ndarray  # (62,)
    embedding: np.ndarray    # (d,)

    @property
    def shape_block(self) -> np.ndarray:
        return self.params_pred[SHAPE_BLOCK_SLICE]


@dataclass
class SiamesePair:
    first: Sample
    second: Sample
    label: int  # 1 genuine, 0 impostor


@dataclass
class TrainConfig:
    stage1_epochs: int
    stage2_epochs: int
    loss_config: LossConfig = field(default_factory=LossConfig)
    batch_size: int = 32
    genuine_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if not 0.0 <= self.genuine_prob <= 1.0:
            raise ValueError(f"genuine_prob must lie in [0, 1], got {self.genuine_prob}")


@dataclass
class EpochStats:
    """Per-epoch trace entry; losses are per-pair means, weights effective."""

    stage: int
    epoch: int
    w_3d: float
    w_shp: float
    w_id: float
    l3d: float
    lshp: float
    lid: float


def _views(layer_sizes, embed_dim, flat):
    views = []
    offset = 0
    for rows, cols in _affine_shapes(layer_sizes, embed_dim):
        w = flat[offset:offset + rows * cols].reshape(rows, cols)
        offset += rows * cols
        b = flat[offset:offset + rows]
        offset += rows
        views.append((w, b))
    return views


def init_model(layer_sizes, embed_dim=64, activation="tanh", seed=0,
               input_center=None, input_scale=None) -> RegressorModel:
    """Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.

    When input_center / input_scale are given (typically training-set
    statistics), they are folded into the first affine map so the network
    effectively sees standardized observations; raw landmark coordinates
    span tens of units and would otherwise saturate the first tanh layer.
    """
    layer_sizes = tuple(int(v) for v in layer_sizes)
    rng = np.random.default_rng(seed)
    flat = np.zeros(weight_count(layer_sizes, embed_dim))
    model = RegressorModel(layer_sizes, embed_dim, activation, flat)
    for w, _ in _views(layer_sizes, embed_dim, model.weights):
        fan_out, fan_in = w.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w[:] = rng.uniform(-limit, limit, size=w.shape)
    if input_center is not None or input_scale is not None:
        center = np.zeros(layer_sizes[0]) if input_center is None \
            else np.asarray(input_center, dtype=float)
        scale = np.ones(layer_sizes[0]) if input_scale is None \
            else np.asarray(input_scale, dtype=float)
        if center.shape != (layer_sizes[0],) or scale.shape != (layer_sizes[0],):
            raise ValueError("input statistics must match the input dimension")
        if np.any(scale <= 0):
            raise ValueError("input_scale entries must be positive")
        views = _views(layer_sizes, embed_dim, model.weights)
        first = views[:1] if len(layer_sizes) > 1 else views[-2:]
        for w, b in first:
            w /= scale
            b -= w @ center
    return model


def _forward_batch(model: RegressorModel, x):
    views = _views(model.layer_sizes, model.embed_dim, model.weights)
    act = ACTIVATIONS[model.activation][0]
    hidden = [x]
    h = x
    for w, b in views[:-2]:
        h = act(h @ w.T + b)
        hidden.append(h)
    (wp, bp), (we, be) = views[-2], views[-1]
    return h @ wp.T + bp, h @ we.T + be, hidden


def forward(model: RegressorModel, observation) -> RegressorOutput:
    """Deterministic forward pass for a single observation."""
    observation = np.asarray(observation, dtype=float)
    if observation.shape != (model.input_dim,):
        raise ValueError(
            f"observation must have {model.input_dim} entries, got shape {observation.shape}")
    params, embed, _ = _forward_batch(model, observation[None, :])
    return RegressorOutput(params[0], embed[0])


def backward(model: RegressorModel, observations, grad_params, grad_embed) -> np.ndarray:
    """Exact reverse-mode gradient on the flat weight vector.

    observations is (B, input_dim); grad_params and grad_embed are the
    upstream gradients on the two heads, (B, 62) and (B, d).
    """
    x = np.atleast_2d(np.asarray(observations, dtype=float))
    grad_params = np.atleast_2d(np.asarray(grad_params, dtype=float))
    grad_embed = np.atleast_2d(np.asarray(grad_embed, dtype=float))
    if x.shape[1] != model.input_dim:
        raise ValueError(f"observations must have {model.input_dim} columns, got {x.shape[1]}")
    if grad_params.shape != (x.shape[0], PARAM_DIM):
        raise ValueError(f"grad_params: expected shape ({x.shape[0]}, {PARAM_DIM}), "
                         f"got {grad_params.shape}")
    if grad_embed.shape != (x.shape[0], model.embed_dim):
        raise ValueError(f"grad_embed: expected shape ({x.shape[0]}, {model.embed_dim}), "
                         f"got {grad_embed.shape}")

    _, _, hidden = _forward_batch(model, x)
    d_act = ACTIVATIONS[model.activation][1]
    views = _views(model.layer_sizes, model.embed_dim, model.weights)
    grad_flat = np.zeros_like(model.weights)
    grad_views = _views(model.layer_sizes, model.embed_dim, grad_flat)

    trunk_out = hidden[-1]
    (wp, _), (we, _) = views[-2], views[-1]
    gwp, gbp = grad_views[-2]
    gwe, gbe = grad_views[-1]
    gwp[:] = grad_params.T @ trunk_out
    gbp[:] = grad_params.sum(axis=0)
    gwe[:] = grad_embed.T @ trunk_out
    gbe[:] = grad_embed.sum(axis=0)

    upstream = grad_params @ wp + grad_embed @ we
    for layer in range(len(views) - 3, -1, -1):
        pre_grad = upstream * d_act(hidden[layer + 1])
        gw, gb = grad_views[layer]
        gw[:] = pre_grad.T @ hidden[layer]
        gb[:] = pre_grad.sum(axis=0)
        upstream = pre_grad @ views[layer][0]
    return grad_flat


def sample_pairs(data, count, genuine_prob, rng) -> list:
    """Independent pair draws: genuine with probability genuine_prob (two
    distinct samples of one identity), impostor otherwise (two identities)."""
    samples = data.samples if isinstance(data, Dataset) else list(data)
    groups = {}
    for s in samples:
        groups.setdefault(s.identity_id, []).append(s)
    identities = sorted(groups)
    multi = [i for i in identities if len(groups[i]) >= 2]
    pairs = []
    for _ in range(int(count)):
        if rng.random() < genuine_prob:
            if not multi:
                raise ValueError("cannot draw a genuine pair: no identity has two or more samples")
            group = groups[multi[rng.integers(len(multi))]]
            i, j = rng.choice(len(group), size=2, replace=False)
            pairs.append(SiamesePair(group[i], group[j], 1))
        else:
            if len(identities) < 2:
                raise ValueError("cannot draw an impostor pair: fewer than 2 identities")
            a, b = rng.choice(len(identities), size=2, replace=False)
            first = groups[identities[a]]
            second = groups[identities[b]]
            pairs.append(SiamesePair(first[rng.integers(len(first))],
                                     second[rng.integers(len(second))], 0))
    return pairs


def _pair_batch(model, chunk):
    x = np.stack([p.first.observation for p in chunk]
                 + [p.second.observation for p in chunk])
    params, embeds, _ = _forward_batch(model, x)
    b = len(chunk)
    batch = PairBatch(
        x1_pred=params[:b],
        x1_gt=np.stack([p.first.params_gt for p in chunk]),
        x2_pred=params[b:],
        x2_gt=np.stack([p.second.params_gt for p in chunk]),
        embed1=embeds[:b],
        embed2=embeds[b:],
        labels=np.array([p.label for p in chunk]))
    return x, batch


def train(model: RegressorModel, dataset, basis: MorphableBasis, cfg: TrainConfig):
    """Two-stage SGD over Siamese pair batches.

    Returns (trained model, per-epoch trace); the input model is not
    modified.  Fully deterministic given the dataset, config and seed.
    Raises TrainingDiverged naming the epoch and term if a loss stops
    being finite.
    """
    samples = dataset.train_samples() if isinstance(dataset, Dataset) else list(dataset)
    if not samples:
        raise ValueError("no training samples")
    for s in samples:
        if s.observation.shape != (model.input_dim,):
            raise ValueError(
                f"observation length {s.observation.size} does not match "
                f"model input {model.input_dim}")
    work = model.copy()
    lc = cfg.loss_config
    rng = np.random.default_rng(cfg.seed)
    pairs_per_epoch = max(1, (len(samples) + 1) // 2)
    trace = []

    for epoch in range(cfg.stage1_epochs + cfg.stage2_epochs):
        stage = 1 if epoch < cfg.stage1_epochs else 2
        decay = lc.gamma ** epoch
        w3, wsh, wid = lc.w_3d * decay, lc.w_shp * decay, lc.w_id * decay
        pairs = sample_pairs(samples, pairs_per_epoch, cfg.genuine_prob, rng)
        sums = np.zeros(3)
        for start in range(0, len(pairs), cfg.batch_size):
            chunk = pairs[start:start + cfg.batch_size]
            x, batch = _pair_batch(work, chunk)
            frozen = batch_wpdc_weights(batch, basis)
            l3d = loss_3d(batch, basis, frozen_weights=frozen)
            lshp = loss_shp(batch, lc.margin, lc.symmetric_impostor)
            lid = loss_id(batch, lc.margin, lc.symmetric_impostor, lc.normalize_embeddings)
            for term, value in (("loss_3d", l3d), ("loss_shp", lshp), ("loss_id", lid)):
                if not np.isfinite(value):
                    raise TrainingDiverged(f"epoch {epoch}: {term} is not finite")
            sums += (l3d, lshp, lid)

            g3_1, g3_2 = grad_loss_3d(batch, basis, frozen_weights=frozen)
            n = len(chunk)
            grad_p = np.empty((2 * n, PARAM_DIM))
            grad_p[:n] = w3 * g3_1
            grad_p[n:] = w3 * g3_2
            grad_e = np.zeros((2 * n, model.embed_dim))
            if stage == 2:
                gs_1, gs_2 = grad_loss_shp(batch, lc.margin, lc.symmetric_impostor)
                grad_p[:n] += wsh * gs_1
                grad_p[n:] += wsh * gs_2
                gi_1, gi_2 = grad_loss_id(batch, lc.margin, lc.symmetric_impostor,
                                          lc.normalize_embeddings)
                grad_e[:n] = wid * gi_1
                grad_e[n:] = wid * gi_2
            # Per-pair mean keeps the step size independent of batch size.
            work.weights -= backward(work, x, grad_p / n, grad_e / n)
        per_pair = sums / len(pairs)
        trace.append(EpochStats(stage, epoch, w3, wsh, wid, *per_pair))
    return work, trace


def save_model(model: RegressorModel, path) -> None:
    """Exact-round-trip text serialization of the model."""
    lines = [
        _MODEL_MAGIC,
        "layer_sizes " + " ".join(str(v) for v in model.layer_sizes),
        f"embed_dim {model.embed_dim}",
        f"activation {model.activation}",
        f"weights {model.weights.size}",
    ]
    for start in range(0, model.weights.size, _WEIGHTS_PER_LINE):
        lines.append(real_line(model.weights[start:start + _WEIGHTS_PER_LINE]))
    write_lines(path, lines)


def load_model(path) -> RegressorModel:
    reader = LineReader(path)
    magic = reader.next_line("header").strip()
    if magic != _MODEL_MAGIC:
        raise ValueError(f"{reader.path}: not a model file (expected '{_MODEL_MAGIC}' header)")
    parts = reader.next_line("layer_sizes").split()
    if len(parts) < 2 or parts[0] != "layer_sizes":
        raise ValueError(f"{reader.path}: line {reader.pos}: expected 'layer_sizes <ints>'")
    try:
        layer_sizes = tuple(int(v) for v in parts[1:])
    except ValueError:
        raise ValueError(f"{reader.path}: line {reader.pos}: layer_sizes must be integers") from None
    embed_dim = reader.labeled_int("embed_dim")
    activation = reader.labeled_str("activation")
    n_weights = reader.labeled_int("weights")
    expected = weight_count(layer_sizes, embed_dim)
    if n_weights != expected:
        raise ValueError(
            f"{reader.path}: weights: declared {n_weights}, architecture implies {expected}")
    flat = reader.real_flat("weights", n_weights, _WEIGHTS_PER_LINE)
    reader.done()
    return RegressorModel(layer_sizes, embed_dim, activation, flat)
