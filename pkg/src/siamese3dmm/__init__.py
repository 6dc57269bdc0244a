"""Siamese-trained 3D morphable model parameter regression at desk scale.

The package covers the full loop: synthetic morphable bases and labeled
identity/pose datasets, the weighted parameter-distance and contrastive
losses with analytic gradients, a small two-headed regressor with a
two-stage SGD trainer, and reconstruction-robustness plus face-verification
evaluation protocols.
"""

__version__ = "0.1.0"

from .morphable import (
    MorphableBasis,
    ParamVector,
    basis_digest,
    load_basis,
    make_synthetic_basis,
    pack,
    project,
    reconstruct_shape,
    save_basis,
    shape_block,
    sparse_landmarks,
    unpack,
)

__all__ = [
    "MorphableBasis",
    "ParamVector",
    "__version__",
    "basis_digest",
    "load_basis",
    "make_synthetic_basis",
    "pack",
    "project",
    "reconstruct_shape",
    "save_basis",
    "shape_block",
    "sparse_landmarks",
    "unpack",
]
