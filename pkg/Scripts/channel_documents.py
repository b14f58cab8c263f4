"""
JSON interchange for channels, matrices, states and tomography runs.

Every document is a JSON object with "format_version": "1" and a "type":
- "kraus" | "choi" | "superop": a channel, "dim" plus "matrices"
- "matrix": a dumped permutation matrix, "name", "params", "matrices"
- "state": a joint state, "dims" [d1, d2] plus "matrices"
- "tomography_run": simulated measurement data for one reconstruction scheme

Matrices are lists of rows; each complex entry is a two-element [re, im] array.
Floats are written with Python's shortest round-trip repr rather than a fixed 17 significant
digits; both identify a double uniquely, so parse(serialize(x)) == x and the text is shorter.
"""
from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from channels import ChannelSpec, ChoiMatrix, KrausSet, Superoperator
from tomography import JointState, MeasurementSet, ProbabilityMatrix, TomographySet


FORMAT_VERSION = "1"
CHANNEL_TYPES = ("kraus", "choi", "superop")
SCHEMES = ("spt", "aapt", "eapt")

logger = logging.getLogger('channel_explorer.documents')


class DocumentError(ValueError):
    """Malformed or unsupported document."""


# -----------------------------
# Matrices
# -----------------------------

def encode_matrix(M) -> List[List[List[float]]]:
    m = np.asarray(M, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"Expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("Cannot serialize a matrix with non-finite entries")
    return np.stack([m.real, m.imag], axis=-1).tolist()


def decode_matrix(obj, what: str = "matrix") -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(row, list) for row in obj):
        raise DocumentError(f"{what} must be a non-empty list of rows")
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise DocumentError(f"{what} has ragged rows or non-numeric entries") from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[1] == 0:
        raise DocumentError(f"{what} entries must be [re, im] pairs in rows of equal length")
    return np.ascontiguousarray(arr[..., 0] + 1j * arr[..., 1])


def _decode_matrices(doc: dict, key: str = "matrices") -> List[np.ndarray]:
    items = doc.get(key)
    if not isinstance(items, list) or not items:
        raise DocumentError(f"'{key}' must be a non-empty list of matrices")
    return [decode_matrix(M, f"{key}[{i}]") for i, M in enumerate(items)]


def _require_int(doc: dict, key: str) -> int:
    value = doc.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise DocumentError(f"'{key}' must be a positive integer, got {value!r}")
    return value


# -----------------------------
# Channel documents
# -----------------------------

def channel_to_document(C: ChannelSpec) -> dict:
    if isinstance(C, KrausSet):
        matrices = [encode_matrix(K) for K in C.operators]
    else:
        matrices = [encode_matrix(C.matrix)]
    return {"format_version": FORMAT_VERSION, "type": C.representation, "dim": C.dim, "matrices": matrices}


def document_to_channel(doc: dict) -> ChannelSpec:
    kind = doc.get("type")
    if kind not in CHANNEL_TYPES:
        raise DocumentError(f"Expected a channel document ({', '.join(CHANNEL_TYPES)}), got type {kind!r}")
    d = _require_int(doc, "dim")
    matrices = _decode_matrices(doc)
    try:
        if kind == "kraus":
            return KrausSet(dim=d, operators=tuple(matrices))
        if len(matrices) != 1:
            raise DocumentError(f"A {kind} document carries exactly one matrix, got {len(matrices)}")
        if kind == "choi":
            return ChoiMatrix(dim=d, matrix=matrices[0])
        return Superoperator(dim=d, matrix=matrices[0])
    except DocumentError:
        raise
    except ValueError as e:
        raise DocumentError(str(e)) from None


# -----------------------------
# Matrix and state documents
# -----------------------------

def matrix_document(M, name: str, params: Dict[str, int]) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "type": "matrix",
        "name": name,
        "params": dict(params),
        "dim": int(np.shape(M)[0]),
        "matrices": [encode_matrix(M)],
    }


def state_document(tau: JointState) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "type": "state",
        "dims": [tau.d1, tau.d2],
        "matrices": [encode_matrix(tau.matrix)],
    }


def _encode_joint(tau: JointState) -> dict:
    return {"dims": [tau.d1, tau.d2], "matrix": encode_matrix(tau.matrix)}


def _decode_joint(obj, what: str) -> JointState:
    if not isinstance(obj, dict):
        raise DocumentError(f"'{what}' must be an object with 'dims' and 'matrix'")
    dims = obj.get("dims")
    if (not isinstance(dims, list) or len(dims) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in dims)):
        raise DocumentError(f"'{what}.dims' must be two positive integers, got {dims!r}")
    try:
        return JointState(d1=dims[0], d2=dims[1], matrix=decode_matrix(obj.get("matrix"), f"{what}.matrix"))
    except DocumentError:
        raise
    except ValueError as e:
        raise DocumentError(f"'{what}': {str(e)}") from None


def document_to_state(doc: dict) -> JointState:
    if doc.get("type") != "state":
        raise DocumentError(f"Expected a state document, got type {doc.get('type')!r}")
    matrices = _decode_matrices(doc)
    if len(matrices) != 1:
        raise DocumentError(f"A state document carries exactly one matrix, got {len(matrices)}")
    return _decode_joint({"dims": doc.get("dims"), "matrix": doc["matrices"][0]}, "state")


# -----------------------------
# Tomography runs
# -----------------------------

@dataclass
class TomographyRun:
    """Measurement data of one tomography experiment; exactly one reconstruction path is filled."""
    scheme: str
    dim: int
    inputs: Optional[TomographySet] = None
    povm: Optional[MeasurementSet] = None
    probabilities: Optional[ProbabilityMatrix] = None
    outputs: Optional[List[np.ndarray]] = None
    joint_in: Optional[JointState] = None
    joint_out: Optional[JointState] = None

    @property
    def path(self) -> str:
        """'probs', 'outputs', 'aapt' or 'eapt'."""
        if self.scheme == "spt":
            return "probs" if self.probabilities is not None else "outputs"
        return self.scheme


_PATH_FIELDS = {
    "probs": {"inputs", "povm", "probabilities"},
    "outputs": {"inputs", "outputs"},
    "aapt": {"joint_in", "joint_out"},
    "eapt": {"joint_out"},
}
_DATA_FIELDS = {"inputs", "povm", "probabilities", "outputs", "joint_in", "joint_out"}


def run_to_document(run: TomographyRun) -> dict:
    doc = {"format_version": FORMAT_VERSION, "type": "tomography_run", "scheme": run.scheme, "dim": run.dim}
    if run.inputs is not None:
        doc["inputs"] = [encode_matrix(s) for s in run.inputs.states]
    if run.povm is not None:
        doc["povm"] = [encode_matrix(M) for M in run.povm.outcomes]
    if run.probabilities is not None:
        m = run.probabilities
        doc["probabilities"] = m.entries.tolist()
        doc["kind"] = m.kind
        doc["shots"] = None if m.shots is None else int(m.shots[0])
    if run.outputs is not None:
        doc["outputs"] = [encode_matrix(o) for o in run.outputs]
    if run.joint_in is not None:
        doc["joint_in"] = _encode_joint(run.joint_in)
    if run.joint_out is not None:
        doc["joint_out"] = _encode_joint(run.joint_out)
    return doc


def _match_path(scheme: str, present: set) -> str:
    if scheme == "spt":
        candidates = ["probs", "outputs"]
    else:
        candidates = [scheme]
    for path in candidates:
        if present == _PATH_FIELDS[path]:
            return path
    wanted = " or ".join(str(sorted(_PATH_FIELDS[p])) for p in candidates)
    raise DocumentError(f"Scheme {scheme!r} needs exactly the fields {wanted}; got {sorted(present)}")


def document_to_run(doc: dict) -> TomographyRun:
    if doc.get("type") != "tomography_run":
        raise DocumentError(f"Expected a tomography_run document, got type {doc.get('type')!r}")
    scheme = doc.get("scheme")
    if scheme not in SCHEMES:
        raise DocumentError(f"Unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    d = _require_int(doc, "dim")
    present = {k for k in _DATA_FIELDS if doc.get(k) is not None}
    path = _match_path(scheme, present)
    run = TomographyRun(scheme=scheme, dim=d)
    try:
        if "inputs" in present:
            run.inputs = TomographySet(dim=d, states=tuple(_decode_matrices(doc, "inputs")))
        if "povm" in present:
            run.povm = MeasurementSet(dim=d, outcomes=tuple(_decode_matrices(doc, "povm")))
        if path == "probs":
            shots = doc.get("shots")
            kind = doc.get("kind", "probabilities")
            if kind not in ("probabilities", "frequencies") or (kind == "frequencies") != (shots is not None):
                raise DocumentError(f"'kind' {kind!r} does not match 'shots' {shots!r}")
            entries = np.asarray(doc["probabilities"], dtype=float)
            per_column = None if shots is None else (int(shots),) * entries.shape[1]
            run.probabilities = ProbabilityMatrix(entries=entries, shots=per_column)
        if "outputs" in present:
            run.outputs = _decode_matrices(doc, "outputs")
        if "joint_in" in present:
            run.joint_in = _decode_joint(doc["joint_in"], "joint_in")
        if "joint_out" in present:
            run.joint_out = _decode_joint(doc["joint_out"], "joint_out")
    except DocumentError:
        raise
    except (TypeError, ValueError, IndexError) as e:
        raise DocumentError(f"Invalid {scheme} run: {str(e)}") from None
    for tau in (run.joint_in, run.joint_out):
        if tau is not None and tau.d1 != d:
            raise DocumentError(f"Joint state system dimension {tau.d1} does not match dim {d}")
    return run


# -----------------------------
# Files
# -----------------------------

def dumps_document(doc: dict) -> str:
    return json.dumps(doc, allow_nan=False) + "\n"


def loads_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentError(f"Not valid JSON: {str(e)}") from None
    if not isinstance(doc, dict):
        raise DocumentError("A document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DocumentError(f"Unsupported format_version {version!r}; expected {FORMAT_VERSION!r}")
    return doc


def read_document(path: str) -> dict:
    """Load a document from a file, or from stdin when path is '-'."""
    if path == "-":
        return loads_document(sys.stdin.read())
    p = Path(path)
    if not p.exists():
        raise DocumentError(f"No such document: {path}")
    logger.debug(f"Reading {p}")
    return loads_document(p.read_text(encoding="utf-8"))


def write_document(doc: dict, path: str) -> None:
    """Write a document to a file, or to stdout when path is '-'."""
    text = dumps_document(doc)
    if path == "-":
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as f:
        f.write(text)
    logger.info(f"Wrote {doc.get('type')} document to {p}")
