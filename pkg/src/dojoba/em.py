"""EM training of the two-latent (speaker + phrase) Gaussian model.

Each vector is modelled as ``x = mu + u_speaker + v_phrase + eps`` with
zero-mean Gaussian latents ``u ~ N(0, sigma_u)``, ``v ~ N(0, sigma_v)`` and
noise ``eps ~ N(0, sigma_eps)``.

The E-step follows the per-speaker / per-phrase conditional formulas: the
speaker posterior is computed with the phrase latents held at their
expectation from the previous iteration, and vice versa. The speaker-phrase
cross moment ``E[u v^T]`` comes from the exact joint posterior of ``(u, v)``
given only the sessions of that pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .core import (
    DIAGONAL,
    FULL,
    LOG_2PI,
    Covariance,
    Dataset,
    DoJoBaParams,
    JBParams,
    cholesky,
    variance_floor,
)
from .errors import (
    DataError,
    FactorizationError,
    InsufficientClassesError,
    NumericalError,
    SizeError,
)

logger = logging.getLogger(__name__)

TOTAL = "total"
PER_CLASS = "per-class"
ALTERNATING = "alternating"
EXACT = "exact"


@dataclass(frozen=True)
class FitConfig:
    """Training options.

    ``variance_floor`` is relative: the absolute floor applied to every
    variance (or eigenvalue) is ``variance_floor * trace(S) / D`` where S is
    the total sample covariance of the training data.
    ``pin_phrase`` holds the phrase covariance at the floor and the phrase
    latents at zero, which reduces the model to single-latent joint Bayesian.
    ``tol`` enables early stopping once the largest parameter change falls
    below it.
    ``estep="exact"`` replaces the alternating conditional expectations with
    the joint posterior over all speaker and phrase latents (diagonal models
    only); that variant is a true EM and its likelihood cannot decrease.
    """

    iterations: int = 10
    covariance: str = DIAGONAL
    variance_floor: float = 1e-8
    seed: int = 0
    init_jitter: float = 0.0
    normalization: str = TOTAL
    pin_phrase: bool = False
    tol: float | None = None
    track_likelihood: bool = True
    estep: str = ALTERNATING

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.covariance not in (DIAGONAL, FULL):
            raise ValueError(f"unknown covariance kind {self.covariance!r}")
        if self.normalization not in (TOTAL, PER_CLASS):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")
        if self.estep not in (ALTERNATING, EXACT):
            raise ValueError(f"unknown E-step {self.estep!r}")
        if self.estep == EXACT and self.covariance != DIAGONAL:
            raise ValueError("the exact E-step is only implemented for diagonal covariances")


@dataclass
class EStats:
    """Posterior expectations from one E-step.

    Second moments are stored as variances (diagonal kind, arrays of shape
    (..., D)) or matrices (full kind, shape (..., D, D)). ``Euv`` is indexed
    by (speaker, phrase) and is zero for pairs without sessions.
    """

    kind: str
    Eu: np.ndarray
    Euu: np.ndarray
    Ev: np.ndarray
    Evv: np.ndarray
    Euv: np.ndarray
    n_speaker: np.ndarray
    n_phrase: np.ndarray
    counts: np.ndarray

    def speaker_posterior_cov(self):
        return self.Euu - _outer(self.Eu, self.kind)

    def phrase_posterior_cov(self):
        return self.Evv - _outer(self.Ev, self.kind)


@dataclass
class FitDiagnostics:
    """Per-iteration training trace.

    ``loglik[t]`` is the log-likelihood after iteration t+1: the exact
    marginal when ``loglik_kind == "exact"``, otherwise the per-pair
    surrogate (sum of each speaker-phrase block's own marginal).
    """

    loglik: list = field(default_factory=list)
    loglik_kind: str = "exact"
    initial_loglik: float | None = None
    param_change: list = field(default_factory=list)
    e_steps: int = 0
    m_steps: int = 0

    @property
    def iterations(self) -> int:
        return len(self.param_change)


def _outer(m, kind):
    if kind == DIAGONAL:
        return m * m
    return m[..., :, None] * m[..., None, :]


def _inv_pd(matrix, what):
    L = cholesky(matrix, what)
    return cho_solve((L, True), np.eye(matrix.shape[0]), check_finite=False)


def _data_floor(data: Dataset, cfg: FitConfig) -> float:
    centered = data.X - data.X.mean(axis=0)
    trace = float(np.sum(centered * centered)) / data.n_samples
    return variance_floor(trace, data.dim, cfg.variance_floor)


def _check_classes(data: Dataset, pin_phrase: bool):
    if data.n_speakers < 2:
        raise InsufficientClassesError(
            "speaker", f"need at least 2 speakers, got {data.n_speakers}")
    if not pin_phrase and data.n_phrases < 2:
        raise InsufficientClassesError(
            "phrase", f"need at least 2 phrases, got {data.n_phrases}")
    if data.counts.max() < 2:
        raise InsufficientClassesError(
            "sessions", "need at least one speaker/phrase pair with 2 or more sessions")


def _group_sum(values, index, n):
    out = np.zeros((n,) + values.shape[1:])
    np.add.at(out, index, values)
    return out


def _cov(scatter, kind, floor):
    return Covariance.from_matrix(scatter, kind).floored(floor)


def init_params(data: Dataset, cfg: FitConfig = FitConfig()) -> DoJoBaParams:
    """Moment-based starting point for EM.

    The mean is the global sample mean; the speaker and phrase covariances
    are the scatter of the per-speaker and per-phrase means about it; the
    noise covariance is the scatter of the residuals left after removing
    both the speaker and the phrase means.
    """
    _check_classes(data, cfg.pin_phrase)
    floor = _data_floor(data, cfg)
    X = data.X
    mu = X.mean(axis=0)
    n_spk = data.counts.sum(axis=1)
    n_phr = data.counts.sum(axis=0)
    spk_mean = _group_sum(X, data.speaker, data.n_speakers) / n_spk[:, None]
    phr_mean = _group_sum(X, data.phrase, data.n_phrases) / n_phr[:, None]

    du = spk_mean - mu
    dv = phr_mean - mu
    if cfg.pin_phrase:
        resid = X - spk_mean[data.speaker]
    else:
        resid = X - spk_mean[data.speaker] - phr_mean[data.phrase] + mu

    kind = cfg.covariance
    sigma_u = du.T @ du / data.n_speakers
    sigma_v = dv.T @ dv / data.n_phrases
    sigma_e = resid.T @ resid / data.n_samples

    if cfg.init_jitter > 0:
        rng = np.random.default_rng(cfg.seed)
        scales = np.exp(cfg.init_jitter * rng.standard_normal((3, data.dim)))
        sigma_u = sigma_u * np.sqrt(np.outer(scales[0], scales[0]))
        sigma_v = sigma_v * np.sqrt(np.outer(scales[1], scales[1]))
        sigma_e = sigma_e * np.sqrt(np.outer(scales[2], scales[2]))

    if cfg.pin_phrase:
        sigma_v = np.zeros_like(sigma_v)
    return DoJoBaParams(
        mu,
        _cov(sigma_u, kind, floor),
        _cov(sigma_v, kind, floor),
        _cov(sigma_e, kind, floor),
    )


# ---------------------------------------------------------------------------
# E-step


def _pair_posterior_diag(s, H, su, sv, se):
    """Joint posterior of (u, v) per dimension from H sessions summing to s.

    All arguments broadcast; returns (mean_u, mean_v, var_u, var_v, cov_uv).
    """
    p12 = H / se
    p11 = 1.0 / su + p12
    p22 = 1.0 / sv + p12
    det = p11 * p22 - p12 * p12
    r = s / se
    mean_u = (p22 - p12) * r / det
    mean_v = (p11 - p12) * r / det
    return mean_u, mean_v, p22 / det, p11 / det, -p12 / det


def pair_posterior(params: DoJoBaParams, sessions) -> tuple[np.ndarray, np.ndarray]:
    """Posterior over the stacked latent ``[u; v]`` given one pair's sessions.

    ``sessions`` has shape (H, D). Returns the posterior mean (2D,) and the
    second moment ``E[[u; v][u; v]^T]`` as a (2D, 2D) matrix.
    """
    sessions = np.atleast_2d(np.asarray(sessions, dtype=np.float64))
    H, D = sessions.shape
    s = np.sum(sessions - params.mu, axis=0)
    if params.kind == DIAGONAL:
        mu_u, mu_v, vu, vv, cuv = _pair_posterior_diag(
            s, H, params.sigma_u.values, params.sigma_v.values, params.sigma_eps.values)
        mean = np.concatenate([mu_u, mu_v])
        cov = np.block([[np.diag(vu), np.diag(cuv)], [np.diag(cuv), np.diag(vv)]])
    else:
        Pe = _inv_pd(params.sigma_eps.matrix(), "noise covariance")
        Pu = _inv_pd(params.sigma_u.matrix(), "speaker covariance")
        Pv = _inv_pd(params.sigma_v.matrix(), "phrase covariance")
        prec = np.block([[Pu + H * Pe, H * Pe], [H * Pe, Pv + H * Pe]])
        cov = _inv_pd(prec, "pair posterior precision")
        r = Pe @ s
        mean = cov @ np.concatenate([r, r])
    return mean, cov + np.outer(mean, mean)


def e_step(data: Dataset, params: DoJoBaParams, prev: EStats | None = None,
           pin_phrase: bool = False) -> EStats:
    """Posterior expectations of the latents under ``params``.

    ``prev`` supplies the speaker and phrase expectations of the previous
    iteration; without it both are taken as zero (the prior mean).
    """
    I, J = data.counts.shape
    D = data.dim
    kind = params.kind
    Xc = data.X - params.mu
    n_spk = data.counts.sum(axis=1).astype(float)
    n_phr = data.counts.sum(axis=0).astype(float)
    if prev is None:
        Eu_prev = np.zeros((I, D))
        Ev_prev = np.zeros((J, D))
    else:
        Eu_prev, Ev_prev = prev.Eu, prev.Ev
        if Eu_prev.shape != (I, D) or Ev_prev.shape != (J, D):
            raise DataError("previous statistics do not match the dataset")

    s_u = _group_sum(Xc - Ev_prev[data.phrase], data.speaker, I)
    s_v = _group_sum(Xc - Eu_prev[data.speaker], data.phrase, J)
    pair_sum = np.zeros((I, J, D))
    np.add.at(pair_sum, (data.speaker, data.phrase), Xc)
    H = data.counts.astype(float)

    if kind == DIAGONAL:
        su = params.sigma_u.values
        sv = params.sigma_v.values
        se = params.sigma_eps.values
        for name, var in (("speaker", su), ("noise", se)) + (() if pin_phrase else (("phrase", sv),)):
            if np.any(var <= 0):
                raise FactorizationError(
                    f"{name} covariance has a non-positive variance", pivot=int(np.argmin(var)))
        post_u = 1.0 / (1.0 / su + n_spk[:, None] / se)
        Eu = post_u * s_u / se
        Euu = post_u + Eu * Eu
        if pin_phrase:
            Ev = np.zeros((J, D))
            Evv = np.zeros((J, D))
            Euv = np.zeros((I, J, D))
        else:
            post_v = 1.0 / (1.0 / sv + n_phr[:, None] / se)
            Ev = post_v * s_v / se
            Evv = post_v + Ev * Ev
            mu_u, mu_v, _, _, cuv = _pair_posterior_diag(pair_sum, H[:, :, None], su, sv, se)
            Euv = np.where(H[:, :, None] > 0, cuv + mu_u * mu_v, 0.0)
        if not (np.all(np.isfinite(Euu)) and np.all(np.isfinite(Euv))):
            raise NumericalError("non-finite posterior statistics")
    else:
        Pe = _inv_pd(params.sigma_eps.matrix(), "noise covariance")
        Pu = _inv_pd(params.sigma_u.matrix(), "speaker covariance")
        Eu = np.empty((I, D))
        Euu = np.empty((I, D, D))
        for i in range(I):
            cov = _inv_pd(Pu + n_spk[i] * Pe, f"posterior precision of speaker {i}")
            Eu[i] = cov @ (Pe @ s_u[i])
            Euu[i] = cov + np.outer(Eu[i], Eu[i])
        Ev = np.zeros((J, D))
        Evv = np.zeros((J, D, D))
        Euv = np.zeros((I, J, D, D))
        if not pin_phrase:
            Pv = _inv_pd(params.sigma_v.matrix(), "phrase covariance")
            for j in range(J):
                cov = _inv_pd(Pv + n_phr[j] * Pe, f"posterior precision of phrase {j}")
                Ev[j] = cov @ (Pe @ s_v[j])
                Evv[j] = cov + np.outer(Ev[j], Ev[j])
            for i, j in zip(*np.nonzero(data.counts)):
                h = H[i, j]
                prec = np.block([[Pu + h * Pe, h * Pe], [h * Pe, Pv + h * Pe]])
                try:
                    cov = _inv_pd(prec, "pair posterior precision")
                except FactorizationError as exc:
                    raise NumericalError(
                        f"singular posterior precision for pair (speaker {i}, phrase {j}): {exc}"
                    ) from None
                r = Pe @ pair_sum[i, j]
                m = cov @ np.concatenate([r, r])
                Euv[i, j] = cov[:D, D:] + np.outer(m[:D], m[D:])

    return EStats(kind, Eu, Euu, Ev, Evv, Euv, n_spk, n_phr, data.counts)


def e_step_exact(data: Dataset, params: DoJoBaParams, pin_phrase: bool = False) -> EStats:
    """Statistics from the joint posterior over every speaker and phrase latent.

    Per dimension the latents of all I speakers and J phrases form one
    Gaussian posterior of size I + J, factorized once; every expectation,
    including ``E[u_i v_j]``, is read from it. Diagonal models only.
    """
    if params.kind != DIAGONAL:
        raise NotImplementedError("exact E-step needs diagonal covariances")
    I, J = data.counts.shape
    D = data.dim
    su = params.sigma_u.values
    sv = params.sigma_v.values
    se = params.sigma_eps.values
    Xc = data.X - params.mu
    n_spk = data.counts.sum(axis=1).astype(float)
    n_phr = data.counts.sum(axis=0).astype(float)
    H = data.counts.astype(float)
    Jl = 0 if pin_phrase else J
    m = I + Jl

    prec = np.zeros((D, m, m))
    prec[:, np.arange(I), np.arange(I)] = 1.0 / su[:, None] + n_spk[None, :] / se[:, None]
    rhs = [_group_sum(Xc, data.speaker, I)]
    if Jl:
        prec[:, I + np.arange(J), I + np.arange(J)] = 1.0 / sv[:, None] + n_phr[None, :] / se[:, None]
        prec[:, :I, I:] = H[None] / se[:, None, None]
        prec[:, I:, :I] = H.T[None] / se[:, None, None]
        rhs.append(_group_sum(Xc, data.phrase, J))
    rhs = np.concatenate(rhs, axis=0).T / se[:, None]  # (D, m)
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise NumericalError("joint posterior precision is not positive definite") from None
    eye = np.broadcast_to(np.eye(m), (D, m, m))
    Linv = np.linalg.solve(L, eye)
    cov = np.transpose(Linv, (0, 2, 1)) @ Linv
    mean = (cov @ rhs[:, :, None])[:, :, 0]

    Eu = mean[:, :I].T
    var_u = np.diagonal(cov, axis1=1, axis2=2)[:, :I].T
    Euu = var_u + Eu * Eu
    if Jl:
        Ev = mean[:, I:].T
        Evv = np.diagonal(cov, axis1=1, axis2=2)[:, I:].T + Ev * Ev
        cuv = np.transpose(cov[:, :I, I:], (1, 2, 0))
        Euv = np.where(H[:, :, None] > 0, cuv + Eu[:, None, :] * Ev[None, :, :], 0.0)
    else:
        Ev = np.zeros((J, D))
        Evv = np.zeros((J, D))
        Euv = np.zeros((I, J, D))
    return EStats(DIAGONAL, Eu, Euu, Ev, Evv, Euv, n_spk, n_phr, data.counts)


# ---------------------------------------------------------------------------
# M-step


def m_step(data: Dataset, stats: EStats, params_old: DoJoBaParams,
           normalization: str = TOTAL, floor: float | None = None,
           pin_phrase: bool = False) -> DoJoBaParams:
    """Re-estimate the parameters from E-step statistics.

    With ``normalization="total"`` the speaker and phrase covariances are
    averages over all samples (each latent's second moment weighted by its
    sample count); ``"per-class"`` averages over distinct speakers/phrases.
    The noise update includes the cross term ``2 E[u v^T]`` of each pair.
    """
    if stats is None or stats.Eu.shape[0] == 0 or stats.counts.sum() == 0:
        raise DataError("empty E-step statistics")
    if stats.counts.shape != data.counts.shape or np.any(stats.counts != data.counts):
        raise DataError("statistics were computed on a different dataset")
    if floor is None:
        floor = variance_floor(params_old.total().trace(), data.dim)
    kind = stats.kind
    N = data.n_samples
    mu = data.X.mean(axis=0)
    Xc = data.X - mu
    spk, phr = data.speaker, data.phrase

    if normalization == TOTAL:
        wu = stats.n_speaker / N
        wv = stats.n_phrase / N
    elif normalization == PER_CLASS:
        wu = np.full(stats.Eu.shape[0], 1.0 / stats.Eu.shape[0])
        wv = np.full(stats.Ev.shape[0], 1.0 / stats.Ev.shape[0])
    else:
        raise ValueError(f"unknown normalization {normalization!r}")

    E = stats.Eu[spk] + stats.Ev[phr]
    H = stats.counts.astype(float)
    if kind == DIAGONAL:
        sigma_u = np.tensordot(wu, stats.Euu, axes=1)
        sigma_v = np.tensordot(wv, stats.Evv, axes=1)
        second = (stats.n_speaker @ stats.Euu + stats.n_phrase @ stats.Evv
                  + 2.0 * np.einsum("ij,ijd->d", H, stats.Euv))
        sigma_e = (np.sum(Xc * Xc, axis=0) - 2.0 * np.sum(Xc * E, axis=0) + second) / N
        sigma_u, sigma_v, sigma_e = np.diag(sigma_u), np.diag(sigma_v), np.diag(sigma_e)
    else:
        sigma_u = np.tensordot(wu, stats.Euu, axes=1)
        sigma_v = np.tensordot(wv, stats.Evv, axes=1)
        cross = Xc.T @ E
        Euv_sum = np.einsum("ij,ijab->ab", H, stats.Euv)
        second = (np.tensordot(stats.n_speaker, stats.Euu, axes=1)
                  + np.tensordot(stats.n_phrase, stats.Evv, axes=1)
                  + Euv_sum + Euv_sum.T)
        sigma_e = (Xc.T @ Xc - cross - cross.T + second) / N

    if pin_phrase:
        sigma_v = np.zeros_like(sigma_v)
    return DoJoBaParams(
        mu,
        _cov(sigma_u, kind, floor),
        _cov(sigma_v, kind, floor),
        _cov(sigma_e, kind, floor),
    )


# ---------------------------------------------------------------------------
# likelihood


def _latent_sizes(data, params):
    if isinstance(params, JBParams):
        return params.sigma_z, None, params.sigma_eps
    return params.sigma_u, params.sigma_v, params.sigma_eps


def exact_marginal_loglik(data: Dataset, params, max_latents: int = 2000) -> float:
    """Exact ``log p(X | params)`` with the latents integrated out.

    Works for diagonal models only, one dimension at a time. In dimension d
    the N x N covariance of all samples is
    ``sigma_u[d] * [same speaker] + sigma_v[d] * [same phrase] + sigma_eps[d] * [same sample]``;
    it is handled through the matrix determinant lemma and the Woodbury
    identity, so only an (I + J) x (I + J) system is factorized per
    dimension. ``max_latents`` bounds I + J.

    ``params`` may also be a JBParams, in which case the phrase term is
    absent and the dataset's speaker labels act as classes.
    """
    su, sv, se = _latent_sizes(data, params)
    if not all(c is None or c.is_diagonal for c in (su, sv, se)):
        raise NotImplementedError("exact marginal likelihood is only implemented for diagonal covariances")
    I, J = data.counts.shape
    if sv is None:
        J = 0
    m = I + J
    if m > max_latents:
        raise SizeError(f"{m} latent variables exceed the guard of {max_latents}")

    N, D = data.X.shape
    Xc = data.X - params.mu
    se_v = se.values
    if np.any(se_v <= 0):
        raise FactorizationError("noise covariance is not positive definite",
                                 pivot=int(np.argmin(se_v)))
    su_v = su.values
    n_spk = data.counts.sum(axis=1).astype(float)

    # W = Z K^{1/2}; G = W^T W per dimension, t = W^T x
    G = np.zeros((D, m, m))
    G[:, np.arange(I), np.arange(I)] = n_spk[None, :] * su_v[:, None]
    s_spk = _group_sum(Xc, data.speaker, I)
    t = [np.sqrt(su_v)[None, :] * s_spk]
    if J:
        sv_v = sv.values
        n_phr = data.counts.sum(axis=0).astype(float)
        G[:, I + np.arange(J), I + np.arange(J)] = n_phr[None, :] * sv_v[:, None]
        cross = data.counts[None, :, :] * np.sqrt(su_v * sv_v)[:, None, None]
        G[:, :I, I:] = cross
        G[:, I:, :I] = np.transpose(cross, (0, 2, 1))
        t.append(np.sqrt(sv_v)[None, :] * _group_sum(Xc, data.phrase, J))
    t = np.concatenate(t, axis=0).T  # (D, m)

    M = G + se_v[:, None, None] * np.eye(m)[None]
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NumericalError("marginal covariance is not positive definite") from None
    logdet_M = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    logdet = (N - m) * np.log(se_v) + logdet_M
    z = np.linalg.solve(L, t[:, :, None])[:, :, 0]
    quad = (np.sum(Xc * Xc, axis=0) - np.sum(z * z, axis=1)) / se_v
    return float(-0.5 * np.sum(N * LOG_2PI + logdet + quad))


def pairwise_surrogate_loglik(data: Dataset, params: DoJoBaParams) -> float:
    """Sum over speaker/phrase pairs of each pair's own marginal log-likelihood.

    Ignores the coupling between pairs that share a speaker or phrase; cheap
    enough for any dataset size (diagonal models only).
    """
    su, sv, se = _latent_sizes(data, params)
    signal = su.values + (0.0 if sv is None else sv.values)
    se = se.values
    I, J = data.counts.shape
    Xc = data.X - params.mu
    sums = np.zeros((I, J, data.dim))
    sq = np.zeros((I, J, data.dim))
    np.add.at(sums, (data.speaker, data.phrase), Xc)
    np.add.at(sq, (data.speaker, data.phrase), Xc * Xc)
    H = data.counts.astype(float)[:, :, None]
    mask = H[:, :, 0] > 0
    denom = se + H * signal
    logdet = (H - 1) * np.log(se) + np.log(denom)
    quad = (sq - signal * sums * sums / denom) / se
    terms = H * LOG_2PI + logdet + quad
    return float(-0.5 * np.sum(terms[mask]))


# ---------------------------------------------------------------------------
# driver


def _max_change(old: DoJoBaParams, new: DoJoBaParams) -> float:
    deltas = [np.max(np.abs(new.mu - old.mu))]
    for a, b in ((old.sigma_u, new.sigma_u), (old.sigma_v, new.sigma_v),
                 (old.sigma_eps, new.sigma_eps)):
        deltas.append(np.max(np.abs(b.values - a.values)))
    return float(max(deltas))


def fit(data: Dataset, cfg: FitConfig = FitConfig()) -> tuple[DoJoBaParams, FitDiagnostics]:
    """Initialise and run ``cfg.iterations`` EM iterations."""
    params = init_params(data, cfg)
    floor = _data_floor(data, cfg)
    diag = FitDiagnostics()

    track = cfg.track_likelihood and cfg.covariance == DIAGONAL
    if track:
        I, J = data.counts.shape
        exact = I + J <= 2000
        diag.loglik_kind = "exact" if exact else "pairwise"
        loglik_fn = exact_marginal_loglik if exact else pairwise_surrogate_loglik
        diag.initial_loglik = loglik_fn(data, _as_scored(params, cfg))
    else:
        diag.loglik_kind = "none"

    stats = None
    for it in range(cfg.iterations):
        if cfg.estep == EXACT:
            stats = e_step_exact(data, params, pin_phrase=cfg.pin_phrase)
        else:
            stats = e_step(data, params, stats, pin_phrase=cfg.pin_phrase)
        diag.e_steps += 1
        new = m_step(data, stats, params, cfg.normalization, floor, cfg.pin_phrase)
        diag.m_steps += 1
        change = _max_change(params, new)
        params = new
        diag.param_change.append(change)
        if track:
            diag.loglik.append(loglik_fn(data, _as_scored(params, cfg)))
            logger.info("iteration %d: loglik=%.6f change=%.3e", it + 1, diag.loglik[-1], change)
        else:
            logger.info("iteration %d: change=%.3e", it + 1, change)
        if cfg.tol is not None and change < cfg.tol:
            break
    return params, diag


def _as_scored(params, cfg):
    # the pinned model is single-latent; its phrase floor is not part of the likelihood
    return params.to_jb() if cfg.pin_phrase else params
