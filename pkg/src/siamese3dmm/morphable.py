"""Linear 3D face geometry: shape synthesis, weak perspective projection,
and the flat 62-entry parameter vector.

A shape is a flat vector of interleaved (x, y, z) coordinates in model
units, synthesized as a mean plus linear shape and expression principal
components.  It is imaged by weak perspective projection: rotate, drop z,
scale, translate in 2D.  The pose (scale, 3x3 rotation stored as 9 free
reals, 2D translation) together with the 40 shape and 10 expression
coefficients packs into one 62-entry regression target.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ._textio import LineReader, real_line, write_lines

SHAPE_DIM = 40
EXPR_DIM = 10
PARAM_DIM = 62

# Flat parameter layout: [scale | rotation row-major | translation | shape | expression].
SCALE_INDEX = 0
ROTATION_SLICE = slice(1, 10)
TRANSLATION_SLICE = slice(10, 12)
SHAPE_COEFF_SLICE = slice(12, 52)
EXPR_COEFF_SLICE = slice(52, 62)
# The 50 coefficient entries that contrastive training compares across a pair.
SHAPE_BLOCK_SLICE = slice(12, 62)

# Orthographic projector: keep x and y, drop z.
PROJECTION_2D = np.array([[1.0, 0.0, 0.0],
                          [0.0, 1.0, 0.0]])

_BASIS_MAGIC = "morphable-basis 1"


@dataclass(eq=False)
class MorphableBasis:
    """Mean shape plus shape/expression principal component matrices."""

    vertex_count: int
    mean_shape: np.ndarray        # (3N,)
    shape_basis: np.ndarray       # (3N, 40)
    expression_basis: np.ndarray  # (3N, 10)
    landmark_indices: np.ndarray  # (L,) distinct vertex indices

    def __post_init__(self):
        self.vertex_count = int(self.vertex_count)
        n = self.vertex_count
        if n <= 0:
            raise ValueError(f"vertex_count must be positive, got {n}")
        self.mean_shape = np.ascontiguousarray(self.mean_shape, dtype=float)
        self.shape_basis = np.ascontiguousarray(self.shape_basis, dtype=float)
        self.expression_basis = np.ascontiguousarray(self.expression_basis, dtype=float)
        self.landmark_indices = np.ascontiguousarray(self.landmark_indices, dtype=int)
        if self.mean_shape.shape != (3 * n,):
            raise ValueError(f"mean_shape: expected shape ({3 * n},), got {self.mean_shape.shape}")
        if self.shape_basis.shape != (3 * n, SHAPE_DIM):
            raise ValueError(
                f"shape_basis: expected shape ({3 * n}, {SHAPE_DIM}), got {self.shape_basis.shape}")
        if self.expression_basis.shape != (3 * n, EXPR_DIM):
            raise ValueError(
                f"expression_basis: expected shape ({3 * n}, {EXPR_DIM}), "
                f"got {self.expression_basis.shape}")
        if self.landmark_indices.ndim != 1 or self.landmark_indices.size == 0:
            raise ValueError("landmark_indices must be a nonempty 1D index list")
        if self.landmark_indices.min() < 0 or self.landmark_indices.max() >= n:
            raise ValueError(f"landmark_indices must lie in [0, {n})")
        if np.unique(self.landmark_indices).size != self.landmark_indices.size:
            raise ValueError("landmark_indices contains duplicates")

    @property
    def landmark_count(self) -> int:
        return int(self.landmark_indices.size)


@dataclass(eq=False)
class ParamVector:
    """Pose and coefficients of one face observation.

    The rotation is carried as 9 unconstrained reals; nothing forces it to
    stay orthonormal, only synthetic ground truth is built that way.
    """

    scale: float
    rotation: np.ndarray      # (3, 3)
    translation: np.ndarray   # (2,)
    shape_coeffs: np.ndarray  # (40,)
    expr_coeffs: np.ndarray   # (10,)

    def __post_init__(self):
        self.scale = float(self.scale)
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        self.shape_coeffs = np.asarray(self.shape_coeffs, dtype=float)
        self.expr_coeffs = np.asarray(self.expr_coeffs, dtype=float)
        if self.rotation.shape != (3, 3):
            raise ValueError(f"rotation: expected shape (3, 3), got {self.rotation.shape}")
        if self.translation.shape != (2,):
            raise ValueError(f"translation: expected shape (2,), got {self.translation.shape}")
        if self.shape_coeffs.shape != (SHAPE_DIM,):
            raise ValueError(
                f"shape_coeffs: expected shape ({SHAPE_DIM},), got {self.shape_coeffs.shape}")
        if self.expr_coeffs.shape != (EXPR_DIM,):
            raise ValueError(
                f"expr_coeffs: expected shape ({EXPR_DIM},), got {self.expr_coeffs.shape}")

    @classmethod
    def identity(cls) -> "ParamVector":
        """Unit scale, identity rotation, zero translation and coefficients."""
        return cls(1.0, np.eye(3), np.zeros(2), np.zeros(SHAPE_DIM), np.zeros(EXPR_DIM))


def pack(params: ParamVector) -> np.ndarray:
    """Flatten a ParamVector into the 62-entry layout."""
    vec = np.empty(PARAM_DIM)
    vec[SCALE_INDEX] = params.scale
    vec[ROTATION_SLICE] = params.rotation.reshape(-1)
    vec[TRANSLATION_SLICE] = params.translation
    vec[SHAPE_COEFF_SLICE] = params.shape_coeffs
    vec[EXPR_COEFF_SLICE] = params.expr_coeffs
    return vec


def unpack(vec) -> ParamVector:
    """Inverse of pack; the input must have exactly 62 entries."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (PARAM_DIM,):
        raise ValueError(f"parameter vector must have {PARAM_DIM} entries, got shape {vec.shape}")
    return ParamVector(
        vec[SCALE_INDEX],
        vec[ROTATION_SLICE].reshape(3, 3),
        vec[TRANSLATION_SLICE].copy(),
        vec[SHAPE_COEFF_SLICE].copy(),
        vec[EXPR_COEFF_SLICE].copy(),
    )


def shape_block(vec) -> np.ndarray:
    """The 50 coefficient entries (indices 12..61) of a flat parameter vector."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (PARAM_DIM,):
        raise ValueError(f"parameter vector must have {PARAM_DIM} entries, got shape {vec.shape}")
    return vec[SHAPE_BLOCK_SLICE]


def reconstruct_shape(basis: MorphableBasis, shape_coeffs, expr_coeffs) -> np.ndarray:
    """Mean shape plus basis columns weighted by the coefficient vectors."""
    shape_coeffs = np.asarray(shape_coeffs, dtype=float)
    expr_coeffs = np.asarray(expr_coeffs, dtype=float)
    if shape_coeffs.shape != (SHAPE_DIM,):
        raise ValueError(f"expected {SHAPE_DIM} shape coefficients, got shape {shape_coeffs.shape}")
    if expr_coeffs.shape != (EXPR_DIM,):
        raise ValueError(f"expected {EXPR_DIM} expression coefficients, got shape {expr_coeffs.shape}")
    return basis.mean_shape + basis.shape_basis @ shape_coeffs + basis.expression_basis @ expr_coeffs


def project(shape, scale, rotation, translation) -> np.ndarray:
    """Weak perspective image of every vertex: scale * Pr * R * v + t.

    Returns a flat vector of interleaved (x, y) coordinates.
    """
    shape = np.asarray(shape, dtype=float)
    if shape.ndim != 1 or shape.size % 3 != 0:
        raise ValueError(f"shape must be a flat (3N,) vector, got shape {shape.shape}")
    rotation = np.asarray(rotation, dtype=float)
    if rotation.shape != (3, 3):
        raise ValueError(f"rotation: expected shape (3, 3), got {rotation.shape}")
    translation = np.asarray(translation, dtype=float)
    if translation.shape != (2,):
        raise ValueError(f"translation: expected shape (2,), got {translation.shape}")
    points = shape.reshape(-1, 3)
    # Pr @ R keeps the first two rows of the rotation.
    xy = float(scale) * (points @ rotation[:2].T) + translation
    return xy.reshape(-1)


def sparse_landmarks(params, basis: MorphableBasis) -> np.ndarray:
    """Project the synthesized shape and keep only the landmark vertices.

    Accepts a ParamVector or a flat 62-entry vector.  Equals
    project(reconstruct_shape(...)) restricted to landmark_indices,
    in index order.
    """
    p = params if isinstance(params, ParamVector) else unpack(params)
    shape = reconstruct_shape(basis, p.shape_coeffs, p.expr_coeffs)
    points = shape.reshape(-1, 3)[basis.landmark_indices]
    xy = p.scale * (points @ p.rotation[:2].T) + p.translation
    return xy.reshape(-1)


def rotation_from_euler(yaw, pitch, roll) -> np.ndarray:
    """Proper rotation Rz(roll) @ Ry(yaw) @ Rx(pitch), angles in radians."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def _blob_mean_shape(n, rng, radius=8.0) -> np.ndarray:
    # Fibonacci sphere with a low-frequency radial modulation: a smooth random
    # field over the sphere, non-degenerate along every axis.
    k = np.arange(n)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    azimuth = 2.0 * np.pi * k / golden
    z = 1.0 - (2.0 * k + 1.0) / n
    ring = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    directions = np.stack([ring * np.cos(azimuth), ring * np.sin(azimuth), z], axis=1)
    bump = np.ones(n)
    for freq in range(1, 5):
        amp = 0.25 / freq
        bump += amp * rng.standard_normal() * np.sin(freq * azimuth + rng.uniform(0.0, 2.0 * np.pi))
        bump += amp * rng.standard_normal() * np.sin(freq * np.pi * z + rng.uniform(0.0, 2.0 * np.pi))
    return (radius * bump[:, None] * directions).reshape(-1)


def make_synthetic_basis(vertex_count, landmark_count, seed, scale=4.0,
                         expr_scale=0.25) -> MorphableBasis:
    """Deterministic stand-in basis for real morphable model data.

    The mean shape is a smooth random blob; the 40 + 10 basis columns are
    jointly orthonormal, then column k of each matrix is scaled by
    scale / (k + 1) (expr_scale for the expression columns) so leading
    columns move vertices the most, mimicking the eigenvalue decay of a
    PCA basis.  The defaults put identity variation at face scale and
    expression variation well below it.
    """
    n = int(vertex_count)
    l = int(landmark_count)
    if l < 1:
        raise ValueError(f"landmark_count must be at least 1, got {l}")
    if n < l:
        raise ValueError(f"vertex_count ({n}) must be at least landmark_count ({l})")
    if scale <= 0 or expr_scale <= 0:
        raise ValueError("basis column scales must be positive")
    total_cols = SHAPE_DIM + EXPR_DIM
    if 3 * n < total_cols:
        raise ValueError(
            f"vertex_count must be at least {-(-total_cols // 3)} so the {total_cols} "
            f"basis columns can be orthonormal, got {n}")
    rng = np.random.default_rng(seed)
    mean = _blob_mean_shape(n, rng)
    raw = rng.standard_normal((3 * n, total_cols))
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))
    shape_cols = q[:, :SHAPE_DIM] * (scale / np.arange(1, SHAPE_DIM + 1))
    expr_cols = q[:, SHAPE_DIM:] * (expr_scale / np.arange(1, EXPR_DIM + 1))
    landmarks = np.sort(rng.choice(n, size=l, replace=False))
    return MorphableBasis(n, mean, shape_cols, expr_cols, landmarks)


def basis_digest(basis: MorphableBasis) -> str:
    """Short content fingerprint tying datasets to the basis that produced them."""
    h = hashlib.sha256()
    h.update(np.array([basis.vertex_count, basis.landmark_count], dtype=np.int64).tobytes())
    h.update(basis.landmark_indices.astype(np.int64).tobytes())
    h.update(basis.mean_shape.tobytes())
    h.update(basis.shape_basis.tobytes())
    h.update(basis.expression_basis.tobytes())
    return h.hexdigest()[:12]


def save_basis(basis: MorphableBasis, path) -> None:
    """Write a basis as a self-describing text document (exact round-trip)."""
    lines = [
        _BASIS_MAGIC,
        f"n_vertices {basis.vertex_count}",
        f"n_landmarks {basis.landmark_count}",
        "landmark_indices",
        " ".join(str(int(i)) for i in basis.landmark_indices),
        "mean",
    ]
    lines.extend(real_line(row) for row in basis.mean_shape.reshape(-1, 3))
    lines.append("shape_basis")
    lines.extend(real_line(row) for row in basis.shape_basis)
    lines.append("expression_basis")
    lines.extend(real_line(row) for row in basis.expression_basis)
    write_lines(path, lines)


def load_basis(path) -> MorphableBasis:
    """Parse a basis file written by save_basis.

    Raises ValueError with file, field and line context on any malformed
    input; never returns a partial basis.
    """
    reader = LineReader(path)
    header = reader.next_line("header").strip()
    if header != _BASIS_MAGIC:
        raise ValueError(f"{reader.path}: not a basis file (expected '{_BASIS_MAGIC}' header)")
    n = reader.labeled_int("n_vertices")
    l = reader.labeled_int("n_landmarks")
    if n <= 0:
        raise ValueError(f"{reader.path}: n_vertices must be positive, got {n}")
    if l <= 0:
        raise ValueError(f"{reader.path}: n_landmarks must be positive, got {l}")
    reader.expect("landmark_indices")
    indices = reader.int_row("landmark_indices", l)
    reader.expect("mean")
    mean = reader.real_matrix("mean", n, 3).reshape(-1)
    reader.expect("shape_basis")
    shape_basis = reader.real_matrix("shape_basis", 3 * n, SHAPE_DIM)
    reader.expect("expression_basis")
    expr_basis = reader.real_matrix("expression_basis", 3 * n, EXPR_DIM)
    reader.done()
    return MorphableBasis(n, mean, shape_basis, expr_basis, indices)
