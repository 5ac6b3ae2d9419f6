"""Verification scores: two-latent likelihood ratio, joint Bayesian, cosine.

All scoring functions accept single vectors of shape (D,) or aligned batches
of shape (n, D) and return a float or an array of n scores. Model scores are
natural-log likelihood ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Covariance, DoJoBaParams, JBParams, log_gaussian_pair
from .errors import DataError


@dataclass(frozen=True)
class HypothesisPriors:
    """Prior weights of the three alternative-hypothesis sub-models.

    p1: different speaker, same phrase; p2: same speaker, different phrase;
    p3: both differ.
    """

    p1: float = 1.0 / 3.0
    p2: float = 1.0 / 3.0
    p3: float = 1.0 / 3.0

    def __post_init__(self):
        p = np.array([self.p1, self.p2, self.p3], dtype=float)
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("priors must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"priors must sum to 1, got {p.sum()!r}")

    @classmethod
    def parse(cls, text: str) -> "HypothesisPriors":
        parts = [float(t) for t in text.split(",")]
        if len(parts) != 3:
            raise ValueError("expected three comma-separated priors")
        return cls(*parts)

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])


def enroll_average(vectors) -> np.ndarray:
    """Element-wise mean of the enrollment vectors."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.size == 0 or arr.shape[0] == 0:
        raise DataError("cannot enroll from an empty list of vectors")
    if arr.ndim != 2:
        raise DataError("enrollment vectors must share one dimension")
    return arr.mean(axis=0)


def hypothesis_logliks(params: DoJoBaParams, x_s, x_t) -> dict[str, np.ndarray]:
    """Log joint densities of ``(x_t, x_s)`` under H0 and the sub-models M1..M3."""
    total = params.total()
    zero = Covariance.zeros(params.dim, total.kind)
    return {
        "H0": log_gaussian_pair(x_t, x_s, params.mu, total, params.sigma_u + params.sigma_v),
        "M1": log_gaussian_pair(x_t, x_s, params.mu, total, params.sigma_v),
        "M2": log_gaussian_pair(x_t, x_s, params.mu, total, params.sigma_u),
        "M3": log_gaussian_pair(x_t, x_s, params.mu, total, zero),
    }


def score_dojoba(params: DoJoBaParams, x_s, x_t,
                 priors: HypothesisPriors = HypothesisPriors()):
    """Log likelihood ratio of 'same speaker and same phrase' against the
    prior-weighted mixture of the three alternatives.

    Sub-models with zero prior are dropped from the mixture.
    """
    ll = hypothesis_logliks(params, x_s, x_t)
    weights = priors.as_array()
    terms = [(w, ll[name]) for w, name in zip(weights, ("M1", "M2", "M3")) if w > 0]
    stacked = np.stack([np.asarray(t, dtype=float) for _, t in terms])
    w = np.array([w for w, _ in terms]).reshape((-1,) + (1,) * (stacked.ndim - 1))
    top = np.max(stacked, axis=0)
    # weights renormalized so equal terms cancel exactly
    mix = top + np.log(np.sum(w * np.exp(stacked - top), axis=0) / np.sum(w))
    out = ll["H0"] - mix
    return float(out) if np.ndim(out) == 0 else out


def score_jb(params: JBParams, x_s, x_t):
    """Joint Bayesian log likelihood ratio (same class vs. different classes)."""
    total = params.sigma_z + params.sigma_eps
    same = log_gaussian_pair(x_t, x_s, params.mu, total, params.sigma_z)
    diff = log_gaussian_pair(x_t, x_s, params.mu, total,
                             Covariance.zeros(params.dim, params.sigma_z.kind))
    out = same - diff
    return float(out) if np.ndim(out) == 0 else out


def score_cosine(x_s, x_t):
    x_s = np.asarray(x_s, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    ns = np.linalg.norm(x_s, axis=-1)
    nt = np.linalg.norm(x_t, axis=-1)
    if np.any(ns == 0) or np.any(nt == 0):
        raise DataError("cosine similarity is undefined for a zero vector")
    out = np.clip(np.sum(x_s * x_t, axis=-1) / (ns * nt), -1.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out
