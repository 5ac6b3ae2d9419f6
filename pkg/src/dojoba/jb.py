"""Single-latent joint Bayesian baseline.

The model ``x = mu + z_class + eps`` is the two-latent model with the phrase
covariance held at zero, so training delegates to :func:`dojoba.em.fit` with
``pin_phrase=True`` on a dataset whose speaker labels are the classes.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import em
from .core import Dataset, JBParams
from .errors import InsufficientClassesError

SPEAKER_PHRASE = "speaker+phrase"
SPEAKER = "speaker"
CLASS_MODES = (SPEAKER_PHRASE, SPEAKER)

_SEP = "\x1f"
_ONE_PHRASE = "*"


class ClassView:
    """Partition of a dataset into joint-Bayesian classes.

    With ``mode="speaker+phrase"`` a class is one (speaker, phrase) pair;
    with ``mode="speaker"`` it is one speaker.
    """

    def __init__(self, data: Dataset, mode: str = SPEAKER_PHRASE):
        if mode not in CLASS_MODES:
            raise ValueError(f"unknown class mode {mode!r}")
        self.data = data
        self.mode = mode
        if mode == SPEAKER:
            self.labels = [(s,) for s in data.speaker_ids]
        else:
            self.labels = list(zip(data.speaker_ids, data.phrase_ids))
        self.classes: dict[tuple, list[int]] = {}
        for row, label in enumerate(self.labels):
            self.classes.setdefault(label, []).append(row)

    def __len__(self):
        return len(self.classes)

    def members(self, class_id) -> np.ndarray:
        return self.data.X[self.classes[class_id]]

    def to_dataset(self) -> Dataset:
        """The same vectors relabelled so that 'speaker' means 'class'.

        Session labels absorb the original phrase so they stay unique
        within a merged class.
        """
        d = self.data
        return d.relabeled(
            [_SEP.join(label) for label in self.labels],
            [_ONE_PHRASE] * len(self.labels),
            [p + _SEP + k for p, k in zip(d.phrase_ids, d.session_ids)],
        )


def fit_jb(data: Dataset, cfg: em.FitConfig = em.FitConfig(),
           class_mode: str = SPEAKER_PHRASE, return_diagnostics: bool = False):
    """Train the joint Bayesian model by EM.

    Returns JBParams, or ``(JBParams, FitDiagnostics)`` when
    ``return_diagnostics`` is set; the diagnostics' likelihood is the exact
    single-latent marginal over the class-relabelled data.
    """
    view = ClassView(data, class_mode)
    try:
        params, diag = em.fit(view.to_dataset(), replace(cfg, pin_phrase=True))
    except InsufficientClassesError as exc:
        axis = "class" if exc.axis == "speaker" else exc.axis
        raise InsufficientClassesError(axis, str(exc).replace("speakers", "classes")) from None
    jb = params.to_jb()
    return (jb, diag) if return_diagnostics else jb


def jb_marginal_loglik(data: Dataset, params: JBParams,
                       class_mode: str = SPEAKER_PHRASE) -> float:
    return em.exact_marginal_loglik(ClassView(data, class_mode).to_dataset(), params)
