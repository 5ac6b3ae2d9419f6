"""Command-line interface: ``dojoba synth | split | train | eval``.

Exit codes: 0 success, 2 usage (including unreadable or unwritable paths),
3 data or format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import em, jb
from .core import DIAGONAL, FULL, Covariance, Dataset, DoJoBaParams, LabeledVector
from .errors import DataError, NumericalError
from .evaluation import (
    Trial,
    build_trials,
    condition_of,
    evaluate,
    format_table,
    group_enrollments,
    reports_csv,
    split_enrollment,
)
from .formats import (
    ModelFile,
    latents_json,
    load_model,
    params_digest,
    read_trials,
    read_vectors,
    save_model,
    write_vectors,
)
from .preprocess import whiten_apply, whiten_fit
from .scoring import HypothesisPriors
from .synthgen import SynthSpec, phrase_id, sample_dataset, speaker_id

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("dojoba")

_COV = {"diag": DIAGONAL, "full": FULL}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    if args.truth:
        model = load_model(args.truth)
        if model.kind != "dojoba":
            raise UsageError("--truth must be a dojoba model file")
        truth = model.params
    else:
        kind = _COV[args.cov]
        D = args.dim

        def cov(var):
            return Covariance.from_matrix(np.eye(D) * var, kind)

        truth = DoJoBaParams(np.full(D, args.mean), cov(args.u_var), cov(args.v_var),
                             cov(args.eps_var), check=False)
    try:
        spec = SynthSpec(args.speakers, args.phrases, args.sessions, truth.dim, truth, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data, latents = sample_dataset(spec)
    write_vectors(args.out, data)
    latents_path = args.latents or str(args.out) + ".latents.json"
    Path(latents_path).write_text(
        latents_json(truth, [speaker_id(i) for i in range(spec.I)],
                     [phrase_id(j) for j in range(spec.J)], latents.u, latents.v),
        encoding="utf-8")
    print(f"rows: {data.n_samples}")
    print(f"params_digest: {params_digest(truth)}")
    return EXIT_OK


def cmd_split(args) -> int:
    data = read_vectors(args.vectors)
    _, enrolled, _ = split_enrollment(data.vectors, args.n_enroll)
    rows = np.array([key in enrolled for key in zip(data.speaker_ids, data.phrase_ids,
                                                     data.session_ids)])
    if not rows.any() or rows.all():
        raise DataError("split leaves the enrollment or the test set empty")
    write_vectors(args.enroll_out, data.subset(rows))
    write_vectors(args.test_out, data.subset(~rows))
    print(f"enroll rows: {int(rows.sum())}")
    print(f"test rows: {int((~rows).sum())}")
    return EXIT_OK


def cmd_train(args) -> int:
    data = read_vectors(args.vectors)
    projection = None
    if args.pca:
        projection = whiten_fit(data.X, args.pca)
        data = Dataset(whiten_apply(projection, data.X), data.speaker_ids, data.phrase_ids,
                       data.session_ids)
    try:
        cfg = em.FitConfig(iterations=args.iters, covariance=_COV[args.cov],
                           variance_floor=args.floor, seed=args.seed,
                           normalization=args.norm, estep=args.estep)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    training = {
        "iterations": args.iters,
        "seed": args.seed,
        "dataset_digest": data.digest(),
        "normalization": args.norm,
        "variance_floor": args.floor,
        "estep": args.estep,
        "n_samples": data.n_samples,
    }
    if args.kind == "dojoba":
        params, diag = em.fit(data, cfg)
    else:
        params, diag = jb.fit_jb(data, cfg, class_mode=args.class_mode, return_diagnostics=True)
        training["class_mode"] = args.class_mode
    training["loglik_kind"] = diag.loglik_kind
    training["loglik"] = [float(x) for x in diag.loglik]
    save_model(args.out, ModelFile(args.kind, params, projection, training))
    log.info("wrote %s model to %s", args.kind, args.out)
    return EXIT_OK


def _vectors(data: Dataset, projection):
    X = data.X if projection is None else whiten_apply(projection, data.X)
    return [LabeledVector(X[r], s, p, k) for r, (s, p, k) in
            enumerate(zip(data.speaker_ids, data.phrase_ids, data.session_ids))]


def _explicit_trials(path, enrollments, tests):
    by_session = {}
    for n, t in enumerate(tests):
        if t.session_id in by_session:
            raise DataError(f"test session id {t.session_id!r} is not unique; "
                            "explicit trial lists need unique test sessions")
        by_session[t.session_id] = n
    trials = []
    for line, (spk, phr, ses, expected) in enumerate(read_trials(path), start=2):
        if (spk, phr) not in enrollments:
            raise DataError(f"{path}:{line}: no enrollment for ({spk}, {phr})")
        if ses not in by_session:
            raise DataError(f"{path}:{line}: unknown test session {ses!r}")
        k = by_session[ses]
        cond = condition_of(spk, phr, tests[k].speaker_id, tests[k].phrase_id)
        if cond != expected:
            raise DataError(f"{path}:{line}: expected condition {expected}, labels give {cond}")
        trials.append(Trial(spk, phr, k, cond))
    return trials


def cmd_eval(args) -> int:
    model = load_model(args.model)
    try:
        priors = HypothesisPriors.parse(args.priors) if args.priors else HypothesisPriors()
    except ValueError as exc:
        raise UsageError(f"--priors: {exc}") from None
    enroll_data = read_vectors(args.enroll)
    test_data = read_vectors(args.test)
    if enroll_data.dim != test_data.dim:
        raise DataError(f"enroll dimension {enroll_data.dim} != test dimension {test_data.dim}")
    if model.projection is not None and model.projection.d_in != enroll_data.dim:
        raise DataError(f"model expects dimension {model.projection.d_in}, "
                        f"files have {enroll_data.dim}")
    if model.projection is None and model.params.dim != enroll_data.dim:
        raise DataError(f"model has dimension {model.params.dim}, files have {enroll_data.dim}")

    systems = []
    for projection, system, name in (
        (model.projection, model.params, args.name or model.kind),
        *([(None, "cosine", "cosine")] if args.cosine else []),
    ):
        enrollments, enrolled = group_enrollments(_vectors(enroll_data, projection))
        tests = _vectors(test_data, projection)
        # the full cross also runs the leakage guard
        trials = build_trials(enrollments, tests, enrolled)
        if args.trials:
            trials = _explicit_trials(args.trials, enrollments, tests)
        systems.append(evaluate(system, enrollments, tests, priors, name=name, trials=trials))

    print(format_table(systems), end="")
    csv_text = reports_csv(systems)
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    else:
        print()
        print(csv_text, end="")
    if args.det:
        Path(args.det).write_text(systems[0].det_csv_text(), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dojoba", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a labelled vector file from the generative model")
    p.add_argument("--speakers", type=int, required=True)
    p.add_argument("--phrases", type=int, required=True)
    p.add_argument("--sessions", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mean", type=float, default=0.0, help="value of every mean entry")
    p.add_argument("--u-var", type=float, default=1.0, help="speaker latent variance")
    p.add_argument("--v-var", type=float, default=1.0, help="phrase latent variance")
    p.add_argument("--eps-var", type=float, default=0.5, help="noise variance")
    p.add_argument("--cov", choices=sorted(_COV), default="diag")
    p.add_argument("--truth", help="take ground-truth parameters from a dojoba model file")
    p.add_argument("-o", "--out", required=True, help="output vector CSV")
    p.add_argument("--latents", help="latent JSON (default: OUT.latents.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="split a vector file into enrollment and test files")
    p.add_argument("vectors")
    p.add_argument("--n-enroll", type=int, default=3)
    p.add_argument("--enroll-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fit a dojoba or joint Bayesian model")
    p.add_argument("vectors")
    p.add_argument("--kind", choices=("dojoba", "jb"), default="dojoba")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--cov", choices=sorted(_COV), default="diag")
    p.add_argument("--pca", type=int, default=0, help="whitening PCA output dimension (0: off)")
    p.add_argument("--norm", choices=(em.TOTAL, em.PER_CLASS), default=em.TOTAL)
    p.add_argument("--estep", choices=(em.ALTERNATING, em.EXACT), default=em.ALTERNATING)
    p.add_argument("--class-mode", choices=jb.CLASS_MODES, default=jb.SPEAKER_PHRASE)
    p.add_argument("--floor", type=float, default=1e-8, help="relative variance floor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True, help="output model JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score trials and report EER per condition")
    p.add_argument("model")
    p.add_argument("--enroll", required=True, help="enrollment vector CSV")
    p.add_argument("--test", required=True, help="test vector CSV")
    p.add_argument("--trials", help="explicit trial TSV")
    p.add_argument("--priors", help="p1,p2,p3 sub-model priors (default: uniform)")
    p.add_argument("--cosine", action="store_true", help="also report the cosine baseline")
    p.add_argument("--name", help="system name in the report")
    p.add_argument("--csv", help="write the CSV report here instead of stdout")
    p.add_argument("--det", help="write pooled DET points (threshold,far,frr) here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except OSError as exc:
        print(f"dojoba: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"dojoba: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"dojoba: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
