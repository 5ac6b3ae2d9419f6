"""On-disk formats: vector CSV, trial TSV, and the JSON model file.

Vector CSV
    UTF-8, header ``speaker,phrase,session,f0,...,f{D-1}``; one vector per
    row with shortest round-trip decimal floats.
Trial TSV
    ``enroll_speaker<TAB>enroll_phrase<TAB>test_session<TAB>expected_condition``
    with that header line.
Model file
    JSON object with ``schema_version``, ``model_kind`` (``dojoba``/``jb``),
    ``covariance_kind``, the mean and covariances as base64 little-endian
    float64 payloads, an optional ``projection`` and ``training`` metadata.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Covariance, Dataset, DoJoBaParams, JBParams
from .errors import DataError
from .preprocess import Projection

SCHEMA_VERSION = 1
VECTOR_LABELS = ("speaker", "phrase", "session")
TRIAL_HEADER = ("enroll_speaker", "enroll_phrase", "test_session", "expected_condition")


class DataFormatError(DataError):
    """Malformed file content; ``line`` is the 1-based line number if known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


# ---------------------------------------------------------------------------
# vectors


def _fmt(x: float) -> str:
    return repr(float(x))


def vectors_csv_text(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VECTOR_LABELS + tuple(f"f{d}" for d in range(data.dim)))
    for row, (s, p, k) in enumerate(zip(data.speaker_ids, data.phrase_ids, data.session_ids)):
        w.writerow([s, p, k] + [_fmt(x) for x in data.X[row]])
    return buf.getvalue()


def write_vectors(path, data: Dataset):
    Path(path).write_text(vectors_csv_text(data), encoding="utf-8")


def parse_vectors(text: str, path=None) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty vector file", path, 1) from None
    D = len(header) - 3
    expected = list(VECTOR_LABELS) + [f"f{d}" for d in range(D)]
    if D < 1 or header != expected:
        raise DataFormatError(
            "header must be 'speaker,phrase,session,f0,...,f{D-1}'", path, 1)
    rows, spk, phr, ses = [], [], [], []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != D + 3:
            raise DataFormatError(f"expected {D + 3} fields, got {len(row)}", path, line)
        try:
            values = [float(x) for x in row[3:]]
        except ValueError as exc:
            raise DataFormatError(f"bad number ({exc})", path, line) from None
        if not all(np.isfinite(values)):
            raise DataFormatError("non-finite feature value", path, line)
        spk.append(row[0])
        phr.append(row[1])
        ses.append(row[2])
        rows.append(values)
    if not rows:
        raise DataFormatError("no vectors in file", path)
    try:
        return Dataset(np.array(rows), spk, phr, ses)
    except DataError as exc:
        raise DataFormatError(str(exc), path) from None


def read_vectors(path) -> Dataset:
    return parse_vectors(Path(path).read_text(encoding="utf-8"), path)


# ---------------------------------------------------------------------------
# trials


def write_trials(path, rows):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(TRIAL_HEADER)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_trials(path) -> list[tuple[str, str, str, str]]:
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text), delimiter="\t")
    header = next(reader, None)
    if header is None or tuple(header) != TRIAL_HEADER:
        raise DataFormatError("header must be " + "\\t".join(TRIAL_HEADER), path, 1)
    out = []
    for row in reader:
        if not row:
            continue
        if len(row) != 4:
            raise DataFormatError(f"expected 4 fields, got {len(row)}", path, reader.line_num)
        out.append(tuple(row))
    return out


# ---------------------------------------------------------------------------
# model file


def _encode(a) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(obj) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def _encode_cov(c: Covariance) -> dict:
    return {"kind": c.kind, **_encode(c.values)}


def _decode_cov(obj) -> Covariance:
    return Covariance(obj["kind"], _decode(obj))


@dataclass(eq=False)
class ModelFile:
    kind: str  # "dojoba" or "jb"
    params: DoJoBaParams | JBParams
    projection: Projection | None = None
    training: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("dojoba", "jb"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        want = DoJoBaParams if self.kind == "dojoba" else JBParams
        if not isinstance(self.params, want):
            raise TypeError(f"{self.kind} model needs {want.__name__}")

    def to_json(self) -> str:
        p = self.params
        if self.kind == "dojoba":
            covs = {"sigma_u": _encode_cov(p.sigma_u), "sigma_v": _encode_cov(p.sigma_v),
                    "sigma_eps": _encode_cov(p.sigma_eps)}
        else:
            covs = {"sigma_z": _encode_cov(p.sigma_z), "sigma_eps": _encode_cov(p.sigma_eps)}
        proj = None
        if self.projection is not None:
            proj = {"mean": _encode(self.projection.mean),
                    "basis": _encode(self.projection.basis),
                    "scales": _encode(self.projection.scales)}
        doc = {
            "schema_version": SCHEMA_VERSION,
            "model_kind": self.kind,
            "covariance_kind": p.kind,
            "dim": p.dim,
            "mu": _encode(p.mu),
            "covariances": covs,
            "projection": proj,
            "training": self.training,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, path=None) -> "ModelFile":
        try:
            doc = json.loads(text)
            if doc.get("schema_version") != SCHEMA_VERSION:
                raise DataFormatError(
                    f"unsupported schema version {doc.get('schema_version')!r}", path)
            kind = doc["model_kind"]
            mu = _decode(doc["mu"])
            covs = {k: _decode_cov(v) for k, v in doc["covariances"].items()}
            if kind == "dojoba":
                params = DoJoBaParams(mu, covs["sigma_u"], covs["sigma_v"], covs["sigma_eps"])
            elif kind == "jb":
                params = JBParams(mu, covs["sigma_z"], covs["sigma_eps"])
            else:
                raise DataFormatError(f"unknown model kind {kind!r}", path)
            proj = doc.get("projection")
            if proj is not None:
                proj = Projection(_decode(proj["mean"]), _decode(proj["basis"]),
                                  _decode(proj["scales"]))
            return cls(kind, params, proj, doc.get("training", {}))
        except DataFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed model file ({exc!r})", path) from None


def save_model(path, model: ModelFile):
    Path(path).write_text(model.to_json(), encoding="utf-8")


def load_model(path) -> ModelFile:
    return ModelFile.from_json(Path(path).read_text(encoding="utf-8"), path)


def params_digest(params) -> str:
    """SHA-256 over the little-endian float64 payloads of a parameter set."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(params.mu, dtype="<f8").tobytes())
    covs = ((params.sigma_u, params.sigma_v, params.sigma_eps) if isinstance(params, DoJoBaParams)
            else (params.sigma_z, params.sigma_eps))
    for c in covs:
        h.update(c.kind.encode())
        h.update(np.ascontiguousarray(c.values, dtype="<f8").tobytes())
    return h.hexdigest()


def latents_json(params: DoJoBaParams, speakers, phrases, u, v) -> str:
    """Ground truth and realised latents of a synthetic dataset."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "params_digest": params_digest(params),
        "mu": _encode(params.mu),
        "covariances": {"sigma_u": _encode_cov(params.sigma_u),
                        "sigma_v": _encode_cov(params.sigma_v),
                        "sigma_eps": _encode_cov(params.sigma_eps)},
        "speakers": list(speakers),
        "phrases": list(phrases),
        "u": _encode(u),
        "v": _encode(v),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
