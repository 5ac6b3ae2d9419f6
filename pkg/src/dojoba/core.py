"""Domain types and Gaussian log-densities shared by the rest of the package.

Everything here is immutable once constructed. Densities are evaluated in
the log domain through Cholesky factors; no explicit inverses or raw
determinants are formed.
"""

from __future__ import annotations

import hashlib
from dataclasses import InitVar, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import DataError, FactorizationError

LOG_2PI = float(np.log(2.0 * np.pi))

DIAGONAL = "diagonal"
FULL = "full"
_KINDS = (DIAGONAL, FULL)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Covariance:
    """A symmetric positive semidefinite covariance.

    ``kind`` is ``"diagonal"`` (``values`` holds the D variances) or
    ``"full"`` (``values`` holds a D x D matrix).
    """

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        values = _frozen(self.values)
        if not np.all(np.isfinite(values)):
            raise DataError("covariance contains non-finite values")
        if self.kind == DIAGONAL:
            if values.ndim != 1:
                raise DataError("diagonal covariance needs a 1-d array of variances")
            if np.any(values < 0):
                raise DataError(
                    f"negative variance at dimension {int(np.argmin(values))}"
                )
        else:
            if values.ndim != 2 or values.shape[0] != values.shape[1]:
                raise DataError("full covariance needs a square matrix")
            scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
            if np.max(np.abs(values - values.T)) > 1e-12 * scale:
                raise DataError("full covariance is not symmetric")
            # exact symmetry so downstream factorizations see identical halves
            values = _frozen(0.5 * (values + values.T))
            if values.shape[0] and np.linalg.eigvalsh(values)[0] < -1e-10 * scale:
                raise DataError("full covariance is not positive semidefinite")
        object.__setattr__(self, "values", values)

    @classmethod
    def diagonal(cls, variances) -> "Covariance":
        return cls(DIAGONAL, variances)

    @classmethod
    def full(cls, matrix) -> "Covariance":
        return cls(FULL, matrix)

    @classmethod
    def zeros(cls, dim: int, kind: str = DIAGONAL) -> "Covariance":
        return cls(kind, np.zeros(dim) if kind == DIAGONAL else np.zeros((dim, dim)))

    @classmethod
    def from_matrix(cls, matrix, kind: str) -> "Covariance":
        """Build a covariance of ``kind`` from a matrix; diagonal drops off-diagonals."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if kind == DIAGONAL:
            return cls(DIAGONAL, np.diag(matrix).copy())
        return cls(FULL, 0.5 * (matrix + matrix.T))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.kind == DIAGONAL

    def matrix(self) -> np.ndarray:
        if self.kind == DIAGONAL:
            return np.diag(self.values)
        return np.array(self.values)

    def variances(self) -> np.ndarray:
        if self.kind == DIAGONAL:
            return np.array(self.values)
        return np.diag(self.values).copy()

    def trace(self) -> float:
        return float(np.sum(self.variances()))

    def as_kind(self, kind: str) -> "Covariance":
        if kind == self.kind:
            return self
        if kind == FULL:
            return Covariance(FULL, np.diag(self.values))
        return Covariance(DIAGONAL, np.diag(self.values).copy())

    def floored(self, floor: float) -> "Covariance":
        """Clip variances (diagonal) or eigenvalues (full) from below at ``floor``."""
        if self.kind == DIAGONAL:
            return Covariance(DIAGONAL, np.maximum(self.values, floor))
        w, V = np.linalg.eigh(self.values)
        if w[0] >= floor:
            return self
        return Covariance(FULL, (V * np.maximum(w, floor)) @ V.T)

    def min_eigenvalue(self) -> float:
        if self.kind == DIAGONAL:
            return float(np.min(self.values))
        return float(np.linalg.eigvalsh(self.values)[0])

    def __add__(self, other: "Covariance") -> "Covariance":
        if self.kind == DIAGONAL and other.kind == DIAGONAL:
            return Covariance(DIAGONAL, self.values + other.values)
        return Covariance(FULL, self.matrix() + other.matrix())

    def __repr__(self):
        return f"Covariance(kind={self.kind!r}, dim={self.dim})"


def variance_floor(reference_trace: float, dim: int, relative: float = 1e-8) -> float:
    """Absolute variance floor ``relative * trace / dim``.

    Falls back to ``relative`` itself when the reference scatter is zero, so
    degenerate data still yields positive definite estimates.
    """
    scale = reference_trace / dim if dim else 0.0
    return relative * scale if scale > 0 else relative


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class LabeledVector:
    features: np.ndarray
    speaker_id: str
    phrase_id: str
    session_id: str

    def __post_init__(self):
        features = _frozen(self.features)
        if features.ndim != 1:
            raise DataError("features must be a 1-d vector")
        if not np.all(np.isfinite(features)):
            raise DataError(
                f"non-finite feature in ({self.speaker_id}, {self.phrase_id}, "
                f"{self.session_id})"
            )
        object.__setattr__(self, "features", features)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.speaker_id, self.phrase_id, self.session_id)


class Dataset:
    """Indexed collection of labelled vectors.

    Rows are kept in input order. Speakers and phrases are numbered in order
    of first appearance, so ``speaker_index`` and ``phrase_index`` are
    deterministic for a given input.

    Attributes
    ----------
    X : ndarray, shape (N, D)
    speaker, phrase : ndarray of int, shape (N,)
        Integer speaker / phrase index of every row.
    counts : ndarray of int, shape (I, J)
        Session count ``H_ij`` of every speaker/phrase pair.
    """

    def __init__(self, X, speaker_ids: Sequence[str], phrase_ids: Sequence[str],
                 session_ids: Sequence[str]):
        X = _frozen(X)
        if X.ndim != 2:
            raise DataError("feature matrix must be 2-d (samples x dims)")
        n = X.shape[0]
        if not (len(speaker_ids) == len(phrase_ids) == len(session_ids) == n):
            raise DataError("label sequences must have one entry per row")
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
        if bad.size:
            raise DataError(f"row {int(bad[0])} contains non-finite features")

        self.X = X
        self.speaker_ids = tuple(str(s) for s in speaker_ids)
        self.phrase_ids = tuple(str(p) for p in phrase_ids)
        self.session_ids = tuple(str(s) for s in session_ids)

        seen = set()
        for row, key in enumerate(zip(self.speaker_ids, self.phrase_ids, self.session_ids)):
            if key in seen:
                raise DataError(f"duplicate (speaker, phrase, session) {key} at row {row}")
            seen.add(key)

        self.speaker_index = {}
        for s in self.speaker_ids:
            self.speaker_index.setdefault(s, len(self.speaker_index))
        self.phrase_index = {}
        for p in self.phrase_ids:
            self.phrase_index.setdefault(p, len(self.phrase_index))

        self.speaker = np.array([self.speaker_index[s] for s in self.speaker_ids], dtype=np.intp)
        self.phrase = np.array([self.phrase_index[p] for p in self.phrase_ids], dtype=np.intp)
        self.speaker.setflags(write=False)
        self.phrase.setflags(write=False)
        counts = np.zeros((len(self.speaker_index), len(self.phrase_index)), dtype=np.int64)
        np.add.at(counts, (self.speaker, self.phrase), 1)
        counts.setflags(write=False)
        self.counts = counts

    @classmethod
    def from_vectors(cls, vectors: Iterable[LabeledVector]) -> "Dataset":
        vectors = list(vectors)
        if not vectors:
            raise DataError("empty dataset")
        dims = {v.features.shape[0] for v in vectors}
        if len(dims) != 1:
            raise DataError(f"vectors have differing dimensions {sorted(dims)}")
        return cls(
            np.stack([v.features for v in vectors]),
            [v.speaker_id for v in vectors],
            [v.phrase_id for v in vectors],
            [v.session_id for v in vectors],
        )

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_speakers(self) -> int:
        return len(self.speaker_index)

    @property
    def n_phrases(self) -> int:
        return len(self.phrase_index)

    @property
    def vectors(self) -> list[LabeledVector]:
        return [
            LabeledVector(self.X[r], s, p, k)
            for r, (s, p, k) in enumerate(zip(self.speaker_ids, self.phrase_ids, self.session_ids))
        ]

    def count(self, speaker_id: str, phrase_id: str) -> int:
        return int(self.counts[self.speaker_index[speaker_id], self.phrase_index[phrase_id]])

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return Dataset(
            self.X[rows],
            [self.speaker_ids[r] for r in rows],
            [self.phrase_ids[r] for r in rows],
            [self.session_ids[r] for r in rows],
        )

    def relabeled(self, speaker_ids: Sequence[str], phrase_ids: Sequence[str],
                  session_ids: Sequence[str] | None = None) -> "Dataset":
        """Same vectors under new labels; sessions kept unless given."""
        return Dataset(self.X, speaker_ids, phrase_ids,
                       self.session_ids if session_ids is None else session_ids)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X, dtype="<f8").tobytes())
        for labels in (self.speaker_ids, self.phrase_ids, self.session_ids):
            h.update("\x1f".join(labels).encode("utf-8"))
            h.update(b"\x1e")
        return h.hexdigest()


def _check_params(mu, covs, strict):
    mu = np.asarray(mu)
    if mu.ndim != 1:
        raise DataError("mean must be a 1-d vector")
    for name, cov in covs.items():
        if not isinstance(cov, Covariance):
            raise TypeError(f"{name} must be a Covariance")
        if cov.dim != mu.shape[0]:
            raise DataError(f"{name} has dimension {cov.dim}, mean has {mu.shape[0]}")
    if strict and covs["sigma_eps"].min_eigenvalue() <= 0:
        raise DataError("sigma_eps must be strictly positive definite")


@dataclass(frozen=True, eq=False)
class DoJoBaParams:
    """Trained two-latent model: mean, speaker, phrase and noise covariances.

    Pass ``check=False`` to skip the positive-definiteness test on the noise
    covariance (used to build degenerate ground truths for sampling).
    """

    mu: np.ndarray
    sigma_u: Covariance
    sigma_v: Covariance
    sigma_eps: Covariance
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "mu", _frozen(self.mu))
        _check_params(self.mu, {"sigma_u": self.sigma_u, "sigma_v": self.sigma_v,
                                "sigma_eps": self.sigma_eps}, check)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def kind(self) -> str:
        kinds = {self.sigma_u.kind, self.sigma_v.kind, self.sigma_eps.kind}
        return DIAGONAL if kinds == {DIAGONAL} else FULL

    def total(self) -> Covariance:
        """Marginal covariance of a single vector."""
        return self.sigma_u + self.sigma_v + self.sigma_eps

    def to_jb(self) -> "JBParams":
        """Single-latent model obtained by dropping the phrase latent."""
        return JBParams(self.mu, self.sigma_u, self.sigma_eps)


@dataclass(frozen=True, eq=False)
class JBParams:
    """Single-latent joint Bayesian model."""

    mu: np.ndarray
    sigma_z: Covariance
    sigma_eps: Covariance
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "mu", _frozen(self.mu))
        _check_params(self.mu, {"sigma_z": self.sigma_z, "sigma_eps": self.sigma_eps}, check)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def kind(self) -> str:
        kinds = {self.sigma_z.kind, self.sigma_eps.kind}
        return DIAGONAL if kinds == {DIAGONAL} else FULL


# ---------------------------------------------------------------------------
# densities


def cholesky(matrix, what="covariance") -> np.ndarray:
    """Lower Cholesky factor; raises FactorizationError naming the failing pivot."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise FactorizationError(f"{what} contains non-finite entries")
    c, info = lapack.dpotrf(matrix, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(
            f"{what} is not positive definite (pivot {info - 1} failed)", pivot=info - 1
        )
    if info < 0:
        raise FactorizationError(f"invalid argument {-info} passed to dpotrf")
    return c


def _check_positive(variances, what):
    bad = np.flatnonzero(~(variances > 0))
    if bad.size:
        d = int(bad[0])
        raise FactorizationError(
            f"{what} is not positive definite (dimension {d} has variance "
            f"{variances[d]!r})", pivot=d
        )


def log_gaussian(x, mean, cov: Covariance):
    """Log density of ``N(x | mean, cov)``.

    ``x`` may be one vector of shape (D,) or a batch of shape (n, D); the
    result is a float or an array of n log densities.
    """
    x = np.asarray(x, dtype=np.float64)
    diff = x - np.asarray(mean, dtype=np.float64)
    D = cov.dim
    if diff.shape[-1] != D:
        raise DataError(f"vector dimension {diff.shape[-1]} does not match covariance {D}")
    if cov.is_diagonal:
        var = cov.values
        _check_positive(var, "covariance")
        maha = np.sum(diff * diff / var, axis=-1)
        logdet = np.sum(np.log(var))
    else:
        L = cholesky(cov.values)
        z = solve_triangular(L, np.atleast_2d(diff).T, lower=True, check_finite=False)
        maha = np.sum(z * z, axis=0)
        if diff.ndim == 1:
            maha = maha[0]
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
    out = -0.5 * (D * LOG_2PI + logdet + maha)
    return float(out) if np.ndim(out) == 0 else out


def log_gaussian_pair(x_t, x_s, mu, diag_block: Covariance, off_block: Covariance):
    """Log density of the stacked vector ``[x_t; x_s]``.

    The mean is ``[mu; mu]`` and the covariance ``[[A, C], [C, A]]`` with
    ``A = diag_block`` and ``C = off_block``. When both blocks are diagonal
    the 2D-dimensional density splits into D independent 2 x 2 problems and
    is evaluated in O(D). Batches of shape (n, D) are accepted for both
    vectors.
    """
    mu = np.asarray(mu, dtype=np.float64)
    a = np.asarray(x_t, dtype=np.float64) - mu
    b = np.asarray(x_s, dtype=np.float64) - mu
    D = diag_block.dim
    if off_block.dim != D or a.shape[-1] != D or b.shape[-1] != D:
        raise DataError("pair density: dimensions do not agree")

    if diag_block.is_diagonal and off_block.is_diagonal:
        A = diag_block.values
        C = off_block.values
        _check_positive(A, "pair covariance diagonal block")
        det = A * A - C * C
        bad = np.flatnonzero(~(det > 0))
        if bad.size:
            d = int(bad[0])
            raise FactorizationError(
                f"pair covariance is not positive definite: off-diagonal block too "
                f"large at dimension {d}", pivot=d
            )
        maha = np.sum((A * (a * a + b * b) - 2.0 * C * (a * b)) / det, axis=-1)
        out = -0.5 * (2 * D * LOG_2PI + np.sum(np.log(det)) + maha)
        return float(out) if np.ndim(out) == 0 else out

    joint = Covariance(FULL, pair_matrix(diag_block, off_block))
    a, b = np.broadcast_arrays(a, b)
    try:
        return log_gaussian(np.concatenate([a, b], axis=-1), 0.0, joint)
    except FactorizationError as exc:
        raise FactorizationError(
            f"pair covariance is not positive definite: {exc}", pivot=exc.pivot
        ) from None


def pair_matrix(diag_block: Covariance, off_block: Covariance) -> np.ndarray:
    """Assemble the 2D x 2D block matrix ``[[A, C], [C, A]]``."""
    A = diag_block.matrix()
    C = off_block.matrix()
    return np.block([[A, C], [C, A]])
