"""Trial construction and equal-error-rate evaluation.

Conditions follow text-dependent verification usage: a trial is target-correct
(TC) when the test vector matches both the enrolled speaker and phrase;
otherwise it is a nontarget of type TW (same speaker, wrong phrase), IC
(impostor, correct phrase) or IW (impostor, wrong phrase).

Score convention: a trial is accepted when its score is >= the threshold.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import DoJoBaParams, JBParams, LabeledVector
from .errors import DataError, LeakageError
from .scoring import HypothesisPriors, enroll_average, score_cosine, score_dojoba, score_jb

TC, IW, TW, IC = "TC", "IW", "TW", "IC"
NONTARGET_CONDITIONS = (IW, TW, IC)
TOTAL = "Total"
REPORT_ROWS = (IW, TW, IC, TOTAL)
CSV_HEADER = ("system", "condition", "eer_percent", "threshold")

WORKERS_ENV = "DOJOBA_WORKERS"


def condition_of(enroll_speaker, enroll_phrase, test_speaker, test_phrase) -> str:
    same_spk = enroll_speaker == test_speaker
    same_phr = enroll_phrase == test_phrase
    if same_spk:
        return TC if same_phr else TW
    return IC if same_phr else IW


@dataclass(frozen=True)
class Trial:
    enroll_speaker: str
    enroll_phrase: str
    test_index: int
    condition: str


def split_enrollment(vectors: Iterable[LabeledVector], n_enroll: int = 3):
    """Split vectors into enrollment models and held-out test vectors.

    For every (speaker, phrase) the first ``n_enroll`` sessions (in input
    order) are averaged into the enrollment model and the rest become test
    vectors. Pairs with fewer than ``n_enroll`` sessions are not enrolled
    and contribute all of their sessions as tests.

    Returns ``(enrollments, enrolled_sessions, tests)``.
    """
    if n_enroll < 1:
        raise ValueError("n_enroll must be >= 1")
    groups: dict[tuple[str, str], list[LabeledVector]] = {}
    for v in vectors:
        groups.setdefault((v.speaker_id, v.phrase_id), []).append(v)
    enrollments = {}
    enrolled = set()
    tests = []
    for key, members in groups.items():
        if len(members) >= n_enroll:
            head = members[:n_enroll]
            enrollments[key] = enroll_average([m.features for m in head])
            enrolled.update(m.key for m in head)
            tests.extend(members[n_enroll:])
        else:
            tests.extend(members)
    return enrollments, enrolled, tests


def group_enrollments(vectors: Iterable[LabeledVector]):
    """Average every (speaker, phrase) group of enrollment vectors.

    Returns ``(enrollments, enrolled_sessions)``.
    """
    groups: dict[tuple[str, str], list[np.ndarray]] = {}
    enrolled = set()
    for v in vectors:
        groups.setdefault((v.speaker_id, v.phrase_id), []).append(v.features)
        enrolled.add(v.key)
    return {k: enroll_average(g) for k, g in groups.items()}, enrolled


def build_trials(enrollments: Mapping[tuple[str, str], np.ndarray],
                 tests: Sequence[LabeledVector],
                 enrolled_sessions: Iterable[tuple[str, str, str]] = ()) -> list[Trial]:
    """Full cross of enrollment models and test vectors, enrollment-major."""
    enrolled_sessions = set(enrolled_sessions)
    for t in tests:
        if t.key in enrolled_sessions:
            raise LeakageError(f"session {t.key} is used for both enrollment and test")
    return [
        Trial(spk, phr, k, condition_of(spk, phr, t.speaker_id, t.phrase_id))
        for (spk, phr) in enrollments
        for k, t in enumerate(tests)
    ]


# ---------------------------------------------------------------------------
# error rates


def det_curve(target_scores, nontarget_scores):
    """False-accept and false-reject rates at every distinct pooled score.

    Returns ``(thresholds, far, frr)``; the last threshold is ``+inf`` where
    everything is rejected. FAR(t) is the fraction of nontargets scoring
    >= t and FRR(t) the fraction of targets scoring < t.
    """
    tar = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    if tar.size == 0 or non.size == 0:
        raise DataError("EER needs at least one target and one nontarget score")
    if not (np.all(np.isfinite(tar)) and np.all(np.isfinite(non))):
        raise DataError("scores must be finite")
    thresholds = np.append(np.unique(np.concatenate([tar, non])), np.inf)
    frr = np.searchsorted(tar, thresholds, side="left") / tar.size
    far = 1.0 - np.searchsorted(non, thresholds, side="left") / non.size
    return thresholds, far, frr


def compute_eer(target_scores, nontarget_scores) -> tuple[float, float]:
    """Equal error rate in percent and the threshold where it occurs.

    FAR falls and FRR rises along the sorted thresholds; the EER is read off
    by linear interpolation between the two thresholds that bracket their
    crossing.
    """
    thr, far, frr = det_curve(target_scores, nontarget_scores)
    d = frr - far
    k = int(np.argmax(d >= 0))  # d ends at 1 > 0, so a crossing exists
    if d[k] == 0 or k == 0:
        return 100.0 * float(frr[k]), float(thr[k])
    alpha = -d[k - 1] / (d[k] - d[k - 1])
    eer = far[k - 1] + alpha * (far[k] - far[k - 1])
    t_hi = thr[k] if np.isfinite(thr[k]) else thr[k - 1]
    threshold = thr[k - 1] + alpha * (t_hi - thr[k - 1])
    return 100.0 * float(eer), float(threshold)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ScoreReport:
    """Per-condition EERs of one system.

    ``eer`` maps each of IW, TW, IC and Total to ``(eer_percent, threshold)``;
    a condition without trials maps to ``(nan, nan)``. ``det`` holds the
    pooled (Total) curve as ``(threshold, far, frr)`` rows.
    """

    system: str
    eer: dict = field(default_factory=dict)
    trial_counts: dict = field(default_factory=dict)
    det: list = field(default_factory=list)

    def rows(self):
        return [(self.system, c) + tuple(self.eer[c]) for c in REPORT_ROWS]

    def csv_text(self, header: bool = True) -> str:
        return reports_csv([self], header=header)

    def det_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("threshold", "far", "frr"))
        for t, a, r in self.det:
            w.writerow((repr(float(t)), repr(float(a)), repr(float(r))))
        return buf.getvalue()

    def table(self) -> str:
        return format_table([self])


def reports_csv(reports: Sequence[ScoreReport], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    for rep in reports:
        for system, cond, eer, thr in rep.rows():
            w.writerow((system, cond, f"{eer:.6f}", repr(float(thr))))
    return buf.getvalue()


def format_table(reports: Sequence[ScoreReport]) -> str:
    """Aligned text table: one row per condition, one column per system."""
    names = [r.system for r in reports]
    width = max([7] + [len(n) for n in names])
    lines = ["EER(%)".ljust(7) + "".join(f" | {n:>{width}}" for n in names)]
    lines.append("-" * len(lines[0]))
    for cond in REPORT_ROWS:
        cells = "".join(f" | {r.eer[cond][0]:>{width}.2f}" for r in reports)
        lines.append(cond.ljust(7) + cells)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# scoring trials


def _resolve_scorer(system, priors) -> tuple[Callable, str]:
    if isinstance(system, DoJoBaParams):
        p = priors or HypothesisPriors()
        return (lambda e, t: score_dojoba(system, e, t, p)), "DoJoBa"
    if isinstance(system, JBParams):
        return (lambda e, t: score_jb(system, e, t)), "joint Bayesian"
    if isinstance(system, str) and system == "cosine":
        return score_cosine, "cosine"
    if callable(system):
        return system, getattr(system, "__name__", "custom")
    raise TypeError(f"cannot score with {system!r}")


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def score_trials(system, enrollments, tests, trials, priors=None, workers=None,
                 chunk: int = 8192) -> np.ndarray:
    """Scores of ``trials`` in input order.

    ``system`` is DoJoBaParams, JBParams, ``"cosine"`` or a callable taking
    aligned (n, D) enrollment and test batches.
    """
    scorer, _ = _resolve_scorer(system, priors)
    if not trials:
        return np.zeros(0)
    keys = list(enrollments)
    key_pos = {k: n for n, k in enumerate(keys)}
    E = np.stack([np.asarray(enrollments[k], dtype=np.float64) for k in keys])
    T = np.stack([t.features for t in tests])
    if E.shape[1] != T.shape[1]:
        raise DataError(f"enrollment dimension {E.shape[1]} != test dimension {T.shape[1]}")
    e_idx = np.array([key_pos[(tr.enroll_speaker, tr.enroll_phrase)] for tr in trials])
    t_idx = np.array([tr.test_index for tr in trials])
    bounds = [(a, min(a + chunk, len(trials))) for a in range(0, len(trials), chunk)]

    def run(b):
        a, z = b
        return np.atleast_1d(scorer(E[e_idx[a:z]], T[t_idx[a:z]]))

    n = _workers(workers)
    if n == 1 or len(bounds) == 1:
        parts = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(n) as pool:
            parts = list(pool.map(run, bounds))
    return np.concatenate(parts)


def report_from_scores(system_name: str, scores, trials) -> ScoreReport:
    cond = np.array([t.condition for t in trials])
    scores = np.asarray(scores)
    targets = scores[cond == TC]
    report = ScoreReport(system_name)
    for c in (TC,) + NONTARGET_CONDITIONS:
        report.trial_counts[c] = int(np.sum(cond == c))
    for c in NONTARGET_CONDITIONS:
        non = scores[cond == c]
        report.eer[c] = compute_eer(targets, non) if targets.size and non.size else (np.nan, np.nan)
    pooled = scores[cond != TC]
    if targets.size and pooled.size:
        report.eer[TOTAL] = compute_eer(targets, pooled)
        thr, far, frr = det_curve(targets, pooled)
        report.det = list(zip(thr.tolist(), far.tolist(), frr.tolist()))
    else:
        report.eer[TOTAL] = (np.nan, np.nan)
    return report


def evaluate(system, enrollments, tests, priors: HypothesisPriors | None = None,
             enrolled_sessions=(), name: str | None = None, workers=None,
             trials: Sequence[Trial] | None = None) -> ScoreReport:
    """Score every enrollment x test trial and report EER per condition.

    Each nontarget condition is scored against the TC targets; Total pools
    all nontargets.
    """
    if trials is None:
        trials = build_trials(enrollments, tests, enrolled_sessions)
    _, default_name = _resolve_scorer(system, priors)
    scores = score_trials(system, enrollments, tests, trials, priors, workers)
    return report_from_scores(name or default_name, scores, trials)
