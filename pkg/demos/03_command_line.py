"""Drive the ``dojoba`` command line end to end in a scratch directory.

Run with ``python3 demos/03_command_line.py``. Each step is printed as the
equivalent shell command.
"""
import shlex
import tempfile
from pathlib import Path

from dojoba import cli


def run(*args):
    args = [str(a) for a in args]
    print("$ dojoba", shlex.join(args))
    code = cli.main(args)
    if code:
        raise SystemExit(code)


with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)

    # %% Synthetic corpus, then a per-(speaker, phrase) enrollment/test split
    run("synth", "--speakers", 30, "--phrases", 5, "--sessions", 6, "--dim", 8,
        "--seed", 1, "-o", root / "all.csv")
    run("split", root / "all.csv", "--n-enroll", 3,
        "--enroll-out", root / "enroll.csv", "--test-out", root / "test.csv")
    print("first rows of all.csv:")
    print("\n".join(Path(root / "all.csv").read_text().splitlines()[:3]))

    # %% Both back-ends
    run("train", root / "all.csv", "--iters", 10, "-o", root / "model.json")
    run("train", root / "all.csv", "--kind", "jb", "-o", root / "jb.json")

    # %% Reports; eval writes the CSV to stdout unless --csv is given
    run("eval", root / "model.json", "--enroll", root / "enroll.csv",
        "--test", root / "test.csv", "--cosine", "--det", root / "det.csv")
    run("eval", root / "jb.json", "--enroll", root / "enroll.csv",
        "--test", root / "test.csv")
    print("DET points written:", len((root / "det.csv").read_text().splitlines()) - 1)

    # %% Errors map to exit codes: 2 usage, 3 data, 4 numerical
    (root / "bad.csv").write_text("speaker,phrase,session,x0\ns,p,k,not-a-number\n")
    print("exit code for a malformed file:",
          cli.main(["train", str(root / "bad.csv"), "-o", str(root / "m.json")]))
