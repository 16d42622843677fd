"""Corpus files, parameter files and report serialization.

Corpus: UTF-8, one JSON document per line::

    {"id": "d1",
     "sentences": [{"tokens": ["a", "b"]}, ...],
     "coref_clusters": [[{"sent": 0, "start": 0, "end": 1}, ...], ...],
     "entities": [{"sent": 0, "start": 0, "end": 1, "text": "Obama", "type": "PERSON"}],
     "reference_summary": [["tokens", "of", "sentence", "one"], ...],
     "generated_summary": [[...], ...],
     "structure_vectors": [[0.1, ...], ...]}

Only ``id`` and ``sentences`` are required. A sentence may also be given as
a bare token list. Spans are end-exclusive.

Parameter files hold named float64 tensors::

    magic  b"DSTENSR1"
    uint32 tensor count
    per tensor: uint16 name length, UTF-8 name, uint8 ndim, uint32 dims...,
                float64 values in row-major order
    (all integers and floats little-endian)
"""

import io as _io
import json
import logging
import math
import struct
import sys
from pathlib import Path

import numpy as np

from .document import Document, Entity, Mention
from .errors import ValidationError

log = logging.getLogger(__name__)

KNOWN_FIELDS = (
    "id", "sentences", "coref_clusters", "entities",
    "reference_summary", "generated_summary", "structure_vectors",
)
PARAMS_MAGIC = b"DSTENSR1"


def _int(obj, key, where):
    try:
        value = obj[key]
    except (KeyError, TypeError):
        raise ValidationError(f"{where}: missing field {key!r}") from None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{where}: field {key!r} must be an integer, got {value!r}")
    return value


def _tokens(value, where):
    if isinstance(value, dict):
        if "tokens" not in value:
            raise ValidationError(f"{where}: sentence object lacks 'tokens'")
        value = value["tokens"]
    if not isinstance(value, list) or not all(isinstance(t, str) for t in value):
        raise ValidationError(f"{where}: expected a list of token strings")
    return tuple(value)


def _summary(value, where):
    if value is None:
        return None
    if not isinstance(value, list):
        raise ValidationError(f"{where}: expected a list of sentences")
    if value and all(isinstance(t, str) for t in value):
        return (tuple(value),)
    return tuple(_tokens(s, f"{where}[{k}]") for k, s in enumerate(value))


def document_from_dict(obj):
    if not isinstance(obj, dict):
        raise ValidationError("a document must be a JSON object")
    doc_id = str(obj.get("id", ""))
    where = f"document {doc_id!r}"
    if "sentences" not in obj:
        raise ValidationError(f"{where}: missing required field 'sentences'")
    if not isinstance(obj["sentences"], list):
        raise ValidationError(f"{where}: 'sentences' must be a list")
    sentences = [_tokens(s, f"{where} sentence {k}") for k, s in enumerate(obj["sentences"])]
    clusters = []
    for k, cluster in enumerate(obj.get("coref_clusters") or []):
        if not isinstance(cluster, list):
            raise ValidationError(f"{where}: cluster {k} must be a list of mentions")
        clusters.append(tuple(
            Mention(*(_int(m, key, f"{where} cluster {k} mention {i}") for key in ("sent", "start", "end")))
            for i, m in enumerate(cluster)
        ))
    entities = []
    for k, e in enumerate(obj.get("entities") or []):
        w = f"{where} entity {k}"
        if not isinstance(e, dict) or not isinstance(e.get("text"), str):
            raise ValidationError(f"{w}: needs a string 'text'")
        entities.append(Entity(_int(e, "sent", w), _int(e, "start", w), _int(e, "end", w),
                               e["text"], str(e.get("type", ""))))
    vectors = obj.get("structure_vectors")
    if vectors is not None:
        try:
            vectors = tuple(tuple(float(x) for x in v) for v in vectors)
        except (TypeError, ValueError):
            raise ValidationError(f"{where}: structure_vectors must be a list of number lists") from None
    unknown = sorted(set(obj) - set(KNOWN_FIELDS))
    if unknown:
        log.warning("%s: ignoring unknown fields %s", where, unknown)
    return Document(
        id=doc_id,
        sentences=sentences,
        coref_clusters=clusters,
        entities=entities,
        reference_summary=_summary(obj.get("reference_summary"), f"{where} reference_summary"),
        generated_summary=_summary(obj.get("generated_summary"), f"{where} generated_summary"),
        structure_vectors=vectors,
    )


def load_document(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed document JSON: {exc}") from None
    return document_from_dict(obj)


def document_to_dict(doc):
    out = {"id": doc.id, "sentences": [{"tokens": list(s)} for s in doc.sentences]}
    if doc.coref_clusters:
        out["coref_clusters"] = [
            [{"sent": m.sent, "start": m.start, "end": m.end} for m in c] for c in doc.coref_clusters
        ]
    if doc.entities:
        out["entities"] = [
            {"sent": e.sent, "start": e.start, "end": e.end, "text": e.text, "type": e.type}
            for e in doc.entities
        ]
    for name in ("reference_summary", "generated_summary"):
        value = getattr(doc, name)
        if value is not None:
            out[name] = [list(s) for s in value]
    if doc.structure_vectors is not None:
        out["structure_vectors"] = [list(v) for v in doc.structure_vectors]
    return out


def serialize_document(doc):
    return json.dumps(document_to_dict(doc), ensure_ascii=False)


def load_corpus(path):
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                docs.append(load_document(line))
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return docs


def write_corpus(docs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(serialize_document(d) + "\n")


# -- parameter files -----------------------------------------------------------

def save_tensors(tensors, path):
    buf = bytearray(PARAMS_MAGIC)
    buf += struct.pack("<I", len(tensors))
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        raw = name.encode("utf-8")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    Path(path).write_bytes(bytes(buf))


def load_tensors(path):
    data = Path(path).read_bytes()
    if not data.startswith(PARAMS_MAGIC):
        raise ValidationError(f"{path}: not a parameter file (bad magic)")
    view = _io.BytesIO(data[len(PARAMS_MAGIC):])

    def read(fmt):
        size = struct.calcsize(fmt)
        chunk = view.read(size)
        if len(chunk) != size:
            raise ValidationError(f"{path}: truncated parameter file")
        return struct.unpack(fmt, chunk)

    out = {}
    (count,) = read("<I")
    for _ in range(count):
        (nlen,) = read("<H")
        name = view.read(nlen).decode("utf-8")
        (ndim,) = read("<B")
        shape = read(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        raw = view.read(8 * size)
        if len(raw) != 8 * size:
            raise ValidationError(f"{path}: truncated tensor {name!r}")
        out[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    return out


# -- reports -------------------------------------------------------------------

def _plain(value):
    """Convert numpy/dataclass-free values to JSON types, 6 significant digits."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        rounded = float(f"{value:.6g}")
        return 0.0 if rounded == 0 else rounded
    return value


def format_report(report):
    return json.dumps(_plain(report), ensure_ascii=False, indent=1) + "\n"


def write_report(report, destination="-"):
    text = format_report(report)
    if destination in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(destination).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot write report to {destination}: {exc}") from None
