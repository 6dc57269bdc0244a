"""Shared helpers for building small random fixtures in tests."""

import numpy as np

from siamese3dmm.morphable import EXPR_DIM, SHAPE_DIM, MorphableBasis, ParamVector


def make_random_basis(n_vertices, n_landmarks, rng) -> MorphableBasis:
    """Unstructured random basis; small enough for brute-force oracles."""
    mean = rng.normal(scale=3.0, size=3 * n_vertices)
    shape_basis = rng.normal(scale=0.5, size=(3 * n_vertices, SHAPE_DIM))
    expr_basis = rng.normal(scale=0.2, size=(3 * n_vertices, EXPR_DIM))
    landmarks = np.sort(rng.choice(n_vertices, size=n_landmarks, replace=False))
    return MorphableBasis(n_vertices, mean, shape_basis, expr_basis, landmarks)


def make_random_params(rng, rotation_scale=1.0) -> ParamVector:
    return ParamVector(
        scale=float(rng.uniform(0.5, 2.0)),
        rotation=rng.normal(scale=rotation_scale, size=(3, 3)),
        translation=rng.uniform(-5.0, 5.0, size=2),
        shape_coeffs=rng.normal(size=SHAPE_DIM),
        expr_coeffs=rng.normal(size=EXPR_DIM),
    )
