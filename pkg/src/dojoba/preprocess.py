"""PCA projection with whitening, applied before model training and scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


class RankError(DataError):
    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank


@dataclass(frozen=True, eq=False)
class Projection:
    """Affine map ``x -> scales * (basis @ (x - mean))``.

    ``basis`` has orthonormal rows (D_out x D_in).
    """

    mean: np.ndarray
    basis: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        for name in ("mean", "basis", "scales"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.basis.ndim != 2 or self.basis.shape[1] != self.mean.shape[0]:
            raise DataError("basis must be D_out x D_in")
        if self.scales.shape != (self.basis.shape[0],):
            raise DataError("scales must have one entry per output dimension")
        if self.basis.shape[0] > self.basis.shape[1]:
            raise DataError("output dimension exceeds input dimension")

    @classmethod
    def identity(cls, dim: int) -> "Projection":
        return cls(np.zeros(dim), np.eye(dim), np.ones(dim))

    @property
    def d_in(self) -> int:
        return self.basis.shape[1]

    @property
    def d_out(self) -> int:
        return self.basis.shape[0]


def whiten_fit(vectors, d_out: int, eig_floor: float = 1e-10) -> Projection:
    """Fit a whitening PCA keeping the ``d_out`` leading components.

    The sample covariance uses the 1/n normalization. Eigenvalues at or
    below ``eig_floor`` times the largest one count as rank deficiency.
    Each basis row is signed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("expected a 2-d array of vectors")
    n, d_in = X.shape
    if d_out < 1 or d_out > d_in:
        raise DataError(f"d_out must be in [1, {d_in}], got {d_out}")
    if n <= d_out:
        raise DataError(f"need more than {d_out} vectors, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / n
    w, V = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    top = w[0] if w[0] > 0 else 0.0
    rank = int(np.sum(w > eig_floor * top)) if top > 0 else 0
    if rank < d_out:
        raise RankError(
            f"data has rank {rank}, cannot keep {d_out} components "
            f"(achievable: at most {rank})", rank)
    basis = V[:, :d_out].T.copy()
    pivot = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(d_out), pivot])
    basis *= signs[:, None]
    scales = 1.0 / np.sqrt(np.maximum(w[:d_out], eig_floor * top))
    return Projection(mean, basis, scales)


def whiten_apply(p: Projection, x) -> np.ndarray:
    """Project one vector (D_in,) or a batch (n, D_in)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.d_in:
        raise DataError(f"expected dimension {p.d_in}, got {x.shape[-1]}")
    return ((x - p.mean) @ p.basis.T) * p.scales
