import csv
import io

import numpy as np
import pytest

from dojoba import em
from dojoba.core import Covariance, DoJoBaParams, LabeledVector
from dojoba.errors import DataError, LeakageError
from dojoba.evaluation import (
    CSV_HEADER,
    REPORT_ROWS,
    build_trials,
    compute_eer,
    det_curve,
    evaluate,
    format_table,
    reports_csv,
    score_trials,
    split_enrollment,
)
from dojoba.synthgen import SynthSpec, sample_dataset


def grid_eer(targets, nontargets, step=1e-4):
    """Brute-force sweep over a fine threshold grid.

    FAR and FRR are counted directly at every grid threshold; the EER is
    interpolated between the last grid point with FRR < FAR and the next.
    """
    tar = np.asarray(targets)
    non = np.asarray(nontargets)
    pooled = np.concatenate([tar, non])
    grid = np.arange(pooled.min() - step, pooled.max() + 2 * step, step)
    far = np.mean(non[None, :] >= grid[:, None], axis=1)
    frr = np.mean(tar[None, :] < grid[:, None], axis=1)
    d = frr - far
    k = int(np.argmax(d >= 0))
    if d[k] == 0 or k == 0:
        return 100 * frr[k]
    alpha = -d[k - 1] / (d[k] - d[k - 1])
    return 100 * (far[k - 1] + alpha * (far[k] - far[k - 1]))


def labelled_lattice(rng, n):
    """Distinct scores 1e-3 apart, offset off the 1e-4 grid; higher scores
    are more likely to be targets."""
    values = np.sort(rng.choice(4000, n, replace=False)) * 1e-3 + 3.7e-5
    is_target = rng.random(n) < np.linspace(0.1, 0.9, n)
    is_target[[0, -1]] = False, True
    return values[is_target], values[~is_target]


class TestEER:
    def test_perfect_separation(self):
        assert compute_eer([2, 3], [0, 1])[0] == 0.0

    def test_identical_lists(self):
        assert compute_eer([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])[0] == pytest.approx(50.0)

    def test_small_example_matches_sweep(self):
        tar, non = [1, 2, 3, 4], [0, 1.5, 2.5, 3.5]
        eer, _ = compute_eer(tar, non)
        assert abs(eer - grid_eer(tar, non)) < 0.01
        assert eer == pytest.approx(50.0)

    def test_random_sets_match_sweep(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            tar, non = labelled_lattice(rng, int(rng.integers(10, 200)))
            assert abs(compute_eer(tar, non)[0] - grid_eer(tar, non)) < 0.01

    def test_interpolated_between_points(self):
        # from t=1 to t=2 FRR goes 0 -> 1/2 while FAR stays 1/3: they meet 2/3 of the way
        eer, thr = compute_eer([1.0, 3.0], [0.0, 0.5, 2.0])
        assert eer == pytest.approx(100 / 3, abs=1e-12)
        assert thr == pytest.approx(5 / 3, abs=1e-12)

    def test_monotone_transform_invariance(self, rng):
        tar = rng.normal(1.0, 1.0, 300)
        non = rng.normal(-1.0, 1.5, 500)
        base = compute_eer(tar, non)[0]
        for f in (np.exp, np.arctan, lambda s: 3 * s - 7, lambda s: s ** 3):
            assert compute_eer(f(tar), f(non))[0] == pytest.approx(base, abs=1e-12)

    def test_swap_and_negate(self, rng):
        tar = rng.normal(1.0, 1.0, 200)
        non = rng.normal(0.0, 1.0, 300)
        assert compute_eer(-non, -tar)[0] == pytest.approx(compute_eer(tar, non)[0], abs=1e-10)

    def test_within_bounds(self, rng):
        for _ in range(20):
            tar, non = rng.normal(size=(2, 50)) * rng.uniform(0.1, 3, 2)[:, None]
            eer = compute_eer(tar, non)[0]
            assert 0.0 <= eer <= 100.0

    def test_det_monotone(self, rng):
        thr, far, frr = det_curve(rng.normal(1, 1, 400), rng.normal(0, 1, 800))
        assert np.all(np.diff(thr) > 0)
        assert np.all(np.diff(far) <= 0) and np.all(np.diff(frr) >= 0)
        assert (far[-1], frr[-1]) == (0.0, 1.0)

    def test_empty(self):
        with pytest.raises(DataError):
            compute_eer([], [1.0])
        with pytest.raises(DataError):
            compute_eer([1.0], [])


def lv(spk, phr, ses, x=(0.0,)):
    return LabeledVector(np.asarray(x, dtype=float), spk, phr, ses)


class TestTrials:
    def test_condition_labels(self):
        enroll = {(s, p): np.zeros(1) for s, p in
                  [("s1", "p1"), ("s1", "p2"), ("s2", "p1"), ("s2", "p2")]}
        trials = build_trials(enroll, [lv("s1", "p1", "t")])
        assert [t.condition for t in trials] == ["TC", "TW", "IC", "IW"]

    def test_zero_tests(self):
        assert build_trials({("a", "x"): np.zeros(1)}, []) == []

    def test_full_cross(self):
        enroll = {(f"s{i}", "p"): np.zeros(1) for i in range(4)}
        tests = [lv("s0", "p", f"k{k}") for k in range(7)]
        assert len(build_trials(enroll, tests)) == 28

    def test_leakage(self):
        vs = [lv("a", "x", f"k{k}", [float(k)]) for k in range(5)]
        enroll, enrolled, tests = split_enrollment(vs, 3)
        with pytest.raises(LeakageError):
            build_trials(enroll, tests + [vs[0]], enrolled)

    def test_split(self):
        vs = [lv("a", "x", f"k{k}", [float(k)]) for k in range(5)] + [lv("b", "x", "k0")]
        enroll, enrolled, tests = split_enrollment(vs, 3)
        np.testing.assert_array_equal(enroll[("a", "x")], [1.0])
        assert ("b", "x") not in enroll
        assert [t.key for t in tests] == [("a", "x", "k3"), ("a", "x", "k4"), ("b", "x", "k0")]
        assert enrolled == {("a", "x", f"k{k}") for k in range(3)}


@pytest.fixture(scope="module")
def separated():
    """Well-separated synthetic protocol: noise far below both latent scales."""
    D = 10
    truth = DoJoBaParams(np.zeros(D), Covariance.diagonal(np.ones(D)),
                         Covariance.diagonal(np.ones(D)), Covariance.diagonal(np.full(D, 0.05)))
    train, _ = sample_dataset(SynthSpec(40, 6, 5, D, truth, seed=1))
    held, _ = sample_dataset(SynthSpec(15, 6, 6, D, truth, seed=2))
    params, _ = em.fit(train, em.FitConfig(iterations=10))
    enroll, enrolled, tests = split_enrollment(held.vectors, 3)
    return params, enroll, enrolled, tests


class TestEvaluate:
    def test_well_separated_low_eer(self, separated):
        params, enroll, enrolled, tests = separated
        rep = evaluate(params, enroll, tests, enrolled_sessions=enrolled)
        for cond in REPORT_ROWS:
            assert rep.eer[cond][0] < 1.0, cond

    def test_cosine_not_better(self, separated):
        params, enroll, enrolled, tests = separated
        ours = evaluate(params, enroll, tests, enrolled_sessions=enrolled)
        cos = evaluate("cosine", enroll, tests, enrolled_sessions=enrolled)
        assert cos.eer["Total"][0] >= ours.eer["Total"][0]

    def test_report_schema(self, separated):
        params, enroll, enrolled, tests = separated
        rep = evaluate(params, enroll, tests, enrolled_sessions=enrolled, name="sys")
        rows = list(csv.reader(io.StringIO(reports_csv([rep]))))
        assert tuple(rows[0]) == CSV_HEADER
        assert [r[:2] for r in rows[1:]] == [["sys", c] for c in REPORT_ROWS]
        for r in rows[1:]:
            assert 0.0 <= float(r[2]) <= 50.0
        table = format_table([rep]).splitlines()
        assert table[0].split("|")[0].strip() == "EER(%)"
        assert [line.split("|")[0].strip() for line in table[2:]] == list(REPORT_ROWS)

    def test_trial_counts(self, separated):
        params, enroll, enrolled, tests = separated
        rep = evaluate(params, enroll, tests, enrolled_sessions=enrolled)
        assert sum(rep.trial_counts.values()) == len(enroll) * len(tests)
        assert rep.trial_counts["TC"] == 15 * 6 * 3

    def test_workers_do_not_change_scores(self, separated):
        params, enroll, enrolled, tests = separated
        trials = build_trials(enroll, tests, enrolled)
        one = score_trials(params, enroll, tests, trials, workers=1, chunk=1000)
        many = score_trials(params, enroll, tests, trials, workers=4, chunk=1000)
        assert one.tobytes() == many.tobytes()

    def test_callable_system(self, separated):
        _, enroll, enrolled, tests = separated

        def neg_distance(e, t):
            return -np.linalg.norm(e - t, axis=-1)

        rep = evaluate(neg_distance, enroll, tests, enrolled_sessions=enrolled)
        assert rep.system == "neg_distance"
