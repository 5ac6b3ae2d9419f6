"""Sample labelled datasets from the two-latent generative model.

Random streams are derived from a single integer seed with
``numpy.random.SeedSequence``. The root sequence is spawned into three
children (speakers, phrases, noise); the speaker child is spawned into one
stream per speaker, the phrase child into one per phrase and the noise child
into one per sample, in row order. Every draw therefore depends only on the
seed and the entity it belongs to, so generation can be split across workers
without changing the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import Covariance, Dataset, DoJoBaParams


@dataclass(frozen=True)
class SynthSpec:
    """Sizes, ground-truth parameters and seed of a synthetic dataset.

    ``H`` is either a constant session count or a mapping from zero-based
    ``(i, j)`` to a count (missing pairs get zero sessions).
    """

    I: int
    J: int
    H: int | Mapping[tuple[int, int], int]
    D: int
    params: DoJoBaParams
    seed: int = 0

    def __post_init__(self):
        for name in ("I", "J", "D"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if isinstance(self.H, Mapping):
            if any(h < 0 for h in self.H.values()):
                raise ValueError("session counts must be non-negative")
            if not any(h > 0 for h in self.H.values()):
                raise ValueError("at least one pair needs a session")
        elif self.H < 1:
            raise ValueError("H must be >= 1")
        if self.params.dim != self.D:
            raise ValueError(f"params have dimension {self.params.dim}, spec says {self.D}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def sessions(self, i: int, j: int) -> int:
        if isinstance(self.H, Mapping):
            return int(self.H.get((i, j), 0))
        return int(self.H)


@dataclass(frozen=True)
class Latents:
    u: np.ndarray  # (I, D)
    v: np.ndarray  # (J, D)


def _factor(cov: Covariance) -> np.ndarray:
    # PSD square root; zero variances give zero draws
    if cov.is_diagonal:
        return np.diag(np.sqrt(cov.values))
    w, V = np.linalg.eigh(cov.values)
    return V * np.sqrt(np.clip(w, 0.0, None))


def _draw(seq: np.random.SeedSequence, factor: np.ndarray, size: int | None = None):
    rng = np.random.Generator(np.random.PCG64(seq))
    D = factor.shape[0]
    z = rng.standard_normal(D if size is None else (size, D))
    return z @ factor.T


def speaker_id(i: int) -> str:
    return f"spk{i:04d}"


def phrase_id(j: int) -> str:
    return f"phr{j:03d}"


def session_id(k: int) -> str:
    return f"ses{k:03d}"


def sample_dataset(spec: SynthSpec) -> tuple[Dataset, Latents]:
    """Draw a dataset and return it with the realised latents.

    Rows are ordered by speaker, then phrase, then session.
    """
    p = spec.params
    spk_root, phr_root, noise_root = np.random.SeedSequence(spec.seed).spawn(3)
    Fu, Fv, Fe = _factor(p.sigma_u), _factor(p.sigma_v), _factor(p.sigma_eps)

    u = np.stack([_draw(s, Fu) for s in spk_root.spawn(spec.I)])
    v = np.stack([_draw(s, Fv) for s in phr_root.spawn(spec.J)])

    keys = [(i, j, k) for i in range(spec.I) for j in range(spec.J)
            for k in range(spec.sessions(i, j))]
    noise_streams = noise_root.spawn(len(keys))
    idx = np.array(keys, dtype=np.intp).reshape(-1, 3)
    eps = np.stack([_draw(s, Fe) for s in noise_streams])
    X = p.mu + u[idx[:, 0]] + v[idx[:, 1]] + eps

    data = Dataset(
        X,
        [speaker_id(i) for i, _, _ in keys],
        [phrase_id(j) for _, j, _ in keys],
        [session_id(k) for _, _, k in keys],
    )
    return data, Latents(u, v)


def random_diagonal_params(D: int, rng: np.random.Generator, *, mu_scale=1.0,
                           u_range=(0.5, 2.0), v_range=(0.5, 2.0),
                           eps_range=(0.2, 1.0)) -> DoJoBaParams:
    """Diagonal ground truth with variances drawn uniformly from the given ranges."""
    return DoJoBaParams(
        mu_scale * rng.standard_normal(D),
        Covariance.diagonal(rng.uniform(*u_range, size=D)),
        Covariance.diagonal(rng.uniform(*v_range, size=D)),
        Covariance.diagonal(rng.uniform(*eps_range, size=D)),
    )
