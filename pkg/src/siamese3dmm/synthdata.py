"""Labeled synthetic identity/pose datasets and their on-disk format.

Each identity keeps one fixed shape coefficient vector; every sample of
that identity gets a fresh expression, pose (large yaw range, moderate
pitch and roll), scale and translation.  The observation a regressor sees
is the flattened landmark projection plus optional Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._textio import LineReader, real_line, write_lines
from .morphable import (
    EXPR_DIM,
    PARAM_DIM,
    SHAPE_DIM,
    MorphableBasis,
    ParamVector,
    basis_digest,
    pack,
    rotation_from_euler,
    sparse_landmarks,
)

_DATASET_MAGIC = "landmark-dataset 1"
_SPLITS = ("train", "validation")


@dataclass(eq=False)
class Sample:
    identity_id: int
    pose_id: int
    params_gt: np.ndarray    # (62,)
    observation: np.ndarray  # (2L,)
    split: str = "train"

    def __post_init__(self):
        self.identity_id = int(self.identity_id)
        self.pose_id = int(self.pose_id)
        self.params_gt = np.asarray(self.params_gt, dtype=float)
        self.observation = np.asarray(self.observation, dtype=float)
        if self.params_gt.shape != (PARAM_DIM,):
            raise ValueError(
                f"params_gt must have {PARAM_DIM} entries, got shape {self.params_gt.shape}")
        if self.observation.ndim != 1:
            raise ValueError("observation must be a flat vector")
        if self.split not in _SPLITS:
            raise ValueError(f"split must be one of {_SPLITS}, got '{self.split}'")


@dataclass(eq=False)
class Dataset:
    """Samples tied to the basis they were projected with.

    Split tags are identity-disjoint: an identity never straddles the
    train/validation boundary.
    """

    basis_ref: str
    samples: list

    def __post_init__(self):
        if not self.samples:
            raise ValueError("datasets must contain at least one sample")
        split_of = {}
        for sample in self.samples:
            seen = split_of.setdefault(sample.identity_id, sample.split)
            if seen != sample.split:
                raise ValueError(
                    f"identity {sample.identity_id} appears in both splits; "
                    "splits must be identity-disjoint")

    def train_samples(self) -> list:
        return [s for s in self.samples if s.split == "train"]

    def validation_samples(self) -> list:
        return [s for s in self.samples if s.split == "validation"]

    def identity_ids(self) -> list:
        return sorted({s.identity_id for s in self.samples})

    @property
    def observation_dim(self) -> int:
        return int(self.samples[0].observation.size)


def generate_dataset(basis: MorphableBasis, n_identities, poses_per_identity,
                     noise_sigma, seed) -> Dataset:
    """Deterministic synthetic dataset of K identities with M poses each.

    Shape coefficients are drawn once per identity from a standard normal
    scaled by the corresponding basis column norm; expressions are drawn
    per sample at 0.3 times that scale so identity dominates the geometry.
    Yaw is uniform in +-90 degrees, pitch and roll in +-25 degrees, scale
    in [0.8, 1.2], translation in +-10 units.
    """
    k = int(n_identities)
    m = int(poses_per_identity)
    if k < 2:
        raise ValueError(f"need at least 2 identities, got {k}")
    if m < 2:
        raise ValueError(f"need at least 2 poses per identity, got {m}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    shape_scales = np.linalg.norm(basis.shape_basis, axis=0)
    expr_scales = np.linalg.norm(basis.expression_basis, axis=0)
    yaw_limit = np.pi / 2.0
    tilt_limit = np.deg2rad(25.0)

    samples = []
    for identity, seq in enumerate(np.random.SeedSequence(seed).spawn(k)):
        rng = np.random.default_rng(seq)
        u_shape = rng.standard_normal(SHAPE_DIM) * shape_scales
        for pose in range(m):
            u_expr = 0.3 * rng.standard_normal(EXPR_DIM) * expr_scales
            rotation = rotation_from_euler(
                yaw=rng.uniform(-yaw_limit, yaw_limit),
                pitch=rng.uniform(-tilt_limit, tilt_limit),
                roll=rng.uniform(-tilt_limit, tilt_limit))
            params = ParamVector(
                scale=rng.uniform(0.8, 1.2),
                rotation=rotation,
                translation=rng.uniform(-10.0, 10.0, size=2),
                shape_coeffs=u_shape,
                expr_coeffs=u_expr)
            observation = sparse_landmarks(params, basis)
            if noise_sigma > 0:
                observation = observation + rng.normal(0.0, noise_sigma, observation.size)
            samples.append(Sample(identity, pose, pack(params), observation))
    return Dataset(basis_digest(basis), samples)


def split_by_identity(dataset: Dataset, validation_fraction, seed) -> Dataset:
    """Retag samples so a seeded fraction of identities becomes validation."""
    if not 0.0 <= validation_fraction <= 1.0:
        raise ValueError(f"validation_fraction must lie in [0, 1], got {validation_fraction}")
    ids = dataset.identity_ids()
    n_val = int(round(len(ids) * validation_fraction))
    order = np.random.default_rng(seed).permutation(len(ids))
    validation_ids = {ids[i] for i in order[:n_val]}
    samples = [
        replace(s, params_gt=s.params_gt, observation=s.observation,
                split="validation" if s.identity_id in validation_ids else "train")
        for s in dataset.samples
    ]
    return Dataset(dataset.basis_ref, samples)


def write_dataset(dataset: Dataset, path) -> None:
    """One sample per line; the header ties the records to their basis."""
    n_landmarks = dataset.observation_dim // 2
    lines = [
        _DATASET_MAGIC,
        f"basis {dataset.basis_ref} landmarks {n_landmarks} "
        f"identities {len(dataset.identity_ids())} samples {len(dataset.samples)}",
    ]
    for s in dataset.samples:
        lines.append(f"{s.identity_id} {s.pose_id} {s.split} "
                     f"{real_line(s.params_gt)} {real_line(s.observation)}")
    write_lines(path, lines)


def read_dataset(path) -> Dataset:
    """Parse a dataset file; any malformed record reports its line number."""
    reader = LineReader(path)
    if not reader.lines or not any(line.strip() for line in reader.lines):
        raise ValueError(f"{reader.path}: dataset file is empty")
    magic = reader.next_line("header").strip()
    if magic != _DATASET_MAGIC:
        raise ValueError(f"{reader.path}: not a dataset file (expected '{_DATASET_MAGIC}' header)")
    header = reader.next_line("counts header").split()
    if len(header) != 8 or header[0::2] != ["basis", "landmarks", "identities", "samples"]:
        raise ValueError(
            f"{reader.path}: line 2: expected 'basis <ref> landmarks <L> "
            "identities <K> samples <N>'")
    basis_ref = header[1]
    try:
        n_landmarks, n_identities, n_samples = (int(v) for v in header[3::2])
    except ValueError:
        raise ValueError(f"{reader.path}: line 2: counts must be integers") from None
    if n_samples < 1:
        raise ValueError(f"{reader.path}: dataset declares no samples")

    expected_fields = 3 + PARAM_DIM + 2 * n_landmarks
    samples = []
    for _ in range(n_samples):
        parts = reader.next_line("sample record").split()
        line_no = reader.pos
        if len(parts) != expected_fields:
            raise ValueError(
                f"{reader.path}: line {line_no}: expected {expected_fields} fields "
                f"(id, pose, split, {PARAM_DIM} parameters, {2 * n_landmarks} "
                f"observation values), got {len(parts)}")
        try:
            identity, pose = int(parts[0]), int(parts[1])
            values = np.array([float(v) for v in parts[3:]], dtype=float)
        except ValueError:
            raise ValueError(f"{reader.path}: line {line_no}: non-numeric field") from None
        samples.append(Sample(identity, pose, values[:PARAM_DIM],
                              values[PARAM_DIM:], parts[2]))
    reader.done()
    dataset = Dataset(basis_ref, samples)
    if len(dataset.identity_ids()) != n_identities:
        raise ValueError(
            f"{reader.path}: header declares {n_identities} identities, "
            f"records contain {len(dataset.identity_ids())}")
    return dataset
