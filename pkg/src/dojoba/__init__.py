"""Two-latent (speaker x phrase) Gaussian back-end for labelled feature vectors.

Vectors are modelled as ``x = mu + u_speaker + v_phrase + eps``. The package
trains the model by EM (:mod:`dojoba.em`), scores verification trials by
closed-form likelihood ratios (:mod:`dojoba.scoring`), provides the
single-latent joint Bayesian baseline (:mod:`dojoba.jb`), synthetic data
(:mod:`dojoba.synthgen`) and an EER harness (:mod:`dojoba.evaluation`).
"""

from .core import Covariance, Dataset, DoJoBaParams, JBParams, LabeledVector
from .em import FitConfig, fit
from .jb import fit_jb
from .scoring import HypothesisPriors, score_cosine, score_dojoba, score_jb

__version__ = "0.1.0"

__all__ = [
    "Covariance",
    "Dataset",
    "DoJoBaParams",
    "FitConfig",
    "HypothesisPriors",
    "JBParams",
    "LabeledVector",
    "fit",
    "fit_jb",
    "score_cosine",
    "score_dojoba",
    "score_jb",
]
