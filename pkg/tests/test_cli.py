import json
import shutil
import subprocess
from dataclasses import replace

import numpy as np
import pytest

from dojoba import cli, em, jb
from dojoba.core import Covariance, DoJoBaParams
from dojoba.errors import NumericalError
from dojoba.formats import (
    DataFormatError,
    ModelFile,
    load_model,
    parse_vectors,
    read_vectors,
    save_model,
    vectors_csv_text,
    write_trials,
)
from dojoba.preprocess import whiten_fit


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def protocol(tmp_path_factory):
    """synth -> split -> train on a small fixture, shared by the eval tests."""
    d = tmp_path_factory.mktemp("cli")
    assert run("synth", "--speakers", 30, "--phrases", 5, "--sessions", 6, "--dim", 6,
               "--seed", 3, "--eps-var", 0.3, "-o", d / "train.csv") == 0
    assert run("synth", "--speakers", 12, "--phrases", 5, "--sessions", 6, "--dim", 6,
               "--seed", 4, "--eps-var", 0.3, "-o", d / "held.csv") == 0
    assert run("split", d / "held.csv", "--enroll-out", d / "enroll.csv",
               "--test-out", d / "test.csv") == 0
    assert run("train", d / "train.csv", "-o", d / "dojoba.json") == 0
    assert run("train", d / "train.csv", "--kind", "jb", "-o", d / "jb.json") == 0
    return d


class TestSynth:
    def test_row_count(self, tmp_path, capsys):
        out = tmp_path / "x.csv"
        assert run("synth", "--speakers", 50, "--phrases", 10, "--sessions", 10, "--dim", 8,
                   "--seed", 7, "-o", out) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 5000
        assert lines[0] == "speaker,phrase,session," + ",".join(f"f{d}" for d in range(8))
        stdout = capsys.readouterr().out
        assert "rows: 5000" in stdout and "params_digest: " in stdout
        latents = json.loads((tmp_path / "x.csv.latents.json").read_text())
        assert len(latents["speakers"]) == 50 and len(latents["phrases"]) == 10

    def test_deterministic(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            run("synth", "--speakers", 4, "--phrases", 3, "--sessions", 2, "--dim", 3,
                "--seed", 11, "-o", tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_truth_from_model(self, tmp_path, protocol):
        assert run("synth", "--speakers", 3, "--phrases", 2, "--sessions", 2, "--dim", 1,
                   "--truth", protocol / "dojoba.json", "-o", tmp_path / "t.csv") == 0
        assert read_vectors(tmp_path / "t.csv").dim == 6

    def test_invalid_spec(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            run("synth", "--speakers", 0, "--phrases", 3, "--sessions", 2, "--dim", 3,
                "-o", tmp_path / "a.csv")
        assert info.value.code == 2


class TestTrain:
    def test_round_trip(self, protocol, tmp_path):
        model = load_model(protocol / "dojoba.json")
        assert model.training["iterations"] == 10
        assert len(model.training["loglik"]) == 10
        save_model(tmp_path / "again.json", model)
        assert (tmp_path / "again.json").read_bytes() == (protocol / "dojoba.json").read_bytes()

    def test_matches_library_fit(self, protocol):
        data = read_vectors(protocol / "train.csv")
        params, _ = em.fit(data)
        model = load_model(protocol / "dojoba.json")
        assert model.params.sigma_u.values.tobytes() == params.sigma_u.values.tobytes()

    def test_jb_matches_constrained_dojoba(self, tmp_path):
        zero_v = DoJoBaParams(np.zeros(3), Covariance.diagonal([1.0, 0.5, 2.0]),
                              Covariance.zeros(3), Covariance.diagonal([0.3, 0.3, 0.3]),
                              check=False)
        save_model(tmp_path / "truth.json", ModelFile("dojoba", zero_v))
        assert run("synth", "--speakers", 20, "--phrases", 3, "--sessions", 4, "--dim", 3,
                   "--truth", tmp_path / "truth.json", "-o", tmp_path / "d.csv") == 0
        assert run("train", tmp_path / "d.csv", "--kind", "jb", "--class-mode", "speaker",
                   "-o", tmp_path / "jb.json") == 0
        got = load_model(tmp_path / "jb.json").params
        data = read_vectors(tmp_path / "d.csv")
        pinned, _ = em.fit(jb.ClassView(data, jb.SPEAKER).to_dataset(),
                           replace(em.FitConfig(), pin_phrase=True))
        np.testing.assert_allclose(got.sigma_z.values, pinned.sigma_u.values, atol=1e-8)
        np.testing.assert_allclose(got.sigma_eps.values, pinned.sigma_eps.values, atol=1e-8)

    def test_pca(self, protocol, tmp_path):
        assert run("train", protocol / "train.csv", "--pca", 4, "-o", tmp_path / "p.json") == 0
        model = load_model(tmp_path / "p.json")
        assert model.projection.d_out == 4 and model.params.dim == 4
        ref = whiten_fit(read_vectors(protocol / "train.csv").X, 4)
        assert model.projection.basis.tobytes() == ref.basis.tobytes()
        assert run("eval", tmp_path / "p.json", "--enroll", protocol / "enroll.csv",
                   "--test", protocol / "test.csv", "--csv", tmp_path / "r.csv") == 0

    def test_full_covariance(self, protocol, tmp_path):
        assert run("train", protocol / "train.csv", "--cov", "full", "--iters", 3,
                   "-o", tmp_path / "f.json") == 0
        assert load_model(tmp_path / "f.json").params.kind == "full"


class TestEval:
    def test_report(self, protocol, capsys):
        assert run("eval", protocol / "dojoba.json", "--enroll", protocol / "enroll.csv",
                   "--test", protocol / "test.csv", "--cosine") == 0
        out = capsys.readouterr().out
        assert "system,condition,eer_percent,threshold" in out
        assert "dojoba,Total," in out and "cosine,Total," in out

    def test_deterministic(self, protocol, tmp_path):
        for name in ("a", "b"):
            run("eval", protocol / "dojoba.json", "--enroll", protocol / "enroll.csv",
                "--test", protocol / "test.csv", "--csv", tmp_path / f"{name}.csv",
                "--det", tmp_path / f"{name}.det")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.det").read_bytes() == (tmp_path / "b.det").read_bytes()

    def test_priors_match_jb(self, protocol, tmp_path):
        jbm = load_model(protocol / "jb.json").params
        equiv = DoJoBaParams(jbm.mu, jbm.sigma_z, Covariance.zeros(jbm.dim), jbm.sigma_eps)
        save_model(tmp_path / "equiv.json", ModelFile("dojoba", equiv))
        common = ("--enroll", protocol / "enroll.csv", "--test", protocol / "test.csv")
        run("eval", tmp_path / "equiv.json", *common, "--priors", "0,0,1", "--csv", tmp_path / "d.csv")
        run("eval", protocol / "jb.json", *common, "--csv", tmp_path / "j.csv")

        def total(path):
            rows = [r.split(",") for r in path.read_text().splitlines()]
            return float(next(r for r in rows if r[1] == "Total")[2])

        assert abs(total(tmp_path / "d.csv") - total(tmp_path / "j.csv")) <= 0.05

    def test_explicit_trials(self, protocol, tmp_path, capsys):
        test = read_vectors(protocol / "test.csv")
        # session ids repeat across speakers; explicit trial lists need them unique
        rows = [(s, p, k) for s, p, k in zip(test.speaker_ids, test.phrase_ids, test.session_ids)]
        uniq = test.relabeled(test.speaker_ids, test.phrase_ids,
                              [f"{s}-{p}-{k}" for s, p, k in rows])
        (tmp_path / "test.csv").write_text(vectors_csv_text(uniq))
        s, p, k = rows[0]
        write_trials(tmp_path / "t.tsv", [(s, p, f"{s}-{p}-{k}", "TC"),
                                         ("spk0001", p, f"{s}-{p}-{k}", "IC")])
        assert run("eval", protocol / "dojoba.json", "--enroll", protocol / "enroll.csv",
                   "--test", tmp_path / "test.csv", "--trials", tmp_path / "t.tsv") == 0
        write_trials(tmp_path / "bad.tsv", [(s, p, f"{s}-{p}-{k}", "IW")])
        assert run("eval", protocol / "dojoba.json", "--enroll", protocol / "enroll.csv",
                   "--test", tmp_path / "test.csv", "--trials", tmp_path / "bad.tsv") == 3
        assert "bad.tsv:2" in capsys.readouterr().err

    def test_leakage(self, protocol):
        assert run("eval", protocol / "dojoba.json", "--enroll", protocol / "enroll.csv",
                   "--test", protocol / "enroll.csv") == 3

    def test_dimension_mismatch(self, protocol, tmp_path):
        run("synth", "--speakers", 3, "--phrases", 2, "--sessions", 4, "--dim", 2,
            "-o", tmp_path / "small.csv")
        assert run("eval", protocol / "dojoba.json", "--enroll", tmp_path / "small.csv",
                   "--test", tmp_path / "small.csv") == 3


class TestExitCodes:
    def test_malformed_row_names_line(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("speaker,phrase,session,f0\na,x,1,0.5\nb,x,1,oops\n")
        assert run("train", path, "-o", tmp_path / "m.json") == 3
        assert "bad.csv:3" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run("train", tmp_path / "nope.csv", "-o", tmp_path / "m.json") == 2

    def test_bad_flag(self):
        with pytest.raises(SystemExit) as info:
            run("train")
        assert info.value.code == 2

    def test_bad_priors(self, protocol):
        with pytest.raises(SystemExit) as info:
            run("eval", protocol / "dojoba.json", "--enroll", protocol / "enroll.csv",
                "--test", protocol / "test.csv", "--priors", "1,1,1")
        assert info.value.code == 2

    def test_insufficient_classes(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("speaker,phrase,session,f0\na,x,1,0.5\na,y,1,0.7\na,x,2,0.1\n")
        assert run("train", path, "-o", tmp_path / "m.json") == 3

    def test_numerical(self, protocol, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise NumericalError("singular")

        monkeypatch.setattr(em, "fit", boom)
        assert run("train", protocol / "train.csv", "-o", tmp_path / "m.json") == 4

    def test_console_script(self):
        exe = shutil.which("dojoba")
        if exe is None:
            pytest.skip("console script not installed")
        res = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "synth" in res.stdout


class TestFormats:
    def test_vector_round_trip_exact(self, rng):
        from dojoba.core import Dataset
        X = rng.standard_normal((5, 3)) * 10 ** rng.uniform(-8, 8, (5, 3))
        data = Dataset(X, list("aabbc"), list("xyxyx"), list("11111"))
        again = parse_vectors(vectors_csv_text(data))
        assert again.X.tobytes() == data.X.tobytes()

    @pytest.mark.parametrize("text, line", [
        ("speaker,phrase,f0\n", 1),
        ("speaker,phrase,session,f0\na,x,1\n", 2),
        ("speaker,phrase,session,f0\na,x,1,1.0\na,x,2,nan\n", 3),
    ])
    def test_parse_errors(self, text, line):
        with pytest.raises(DataFormatError) as info:
            parse_vectors(text, "f.csv")
        assert info.value.line == line

    def test_model_round_trip(self, tmp_path, rng):
        A = rng.standard_normal((3, 3))
        p = DoJoBaParams(rng.standard_normal(3), Covariance.full(A @ A.T),
                         Covariance.full(np.eye(3)), Covariance.full(A @ A.T + np.eye(3)))
        proj = whiten_fit(rng.standard_normal((20, 5)), 3)
        save_model(tmp_path / "m.json", ModelFile("dojoba", p, proj, {"seed": 1}))
        back = load_model(tmp_path / "m.json")
        for a, b in ((p.mu, back.params.mu), (p.sigma_u.values, back.params.sigma_u.values),
                     (proj.basis, back.projection.basis)):
            assert a.tobytes() == b.tobytes()

    def test_schema_version_checked(self, tmp_path, protocol):
        doc = json.loads((protocol / "dojoba.json").read_text())
        doc["schema_version"] = 99
        with pytest.raises(DataFormatError):
            ModelFile.from_json(json.dumps(doc))
