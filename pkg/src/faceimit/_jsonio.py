"""Small helpers for the JSON / JSON-lines artifacts."""
import json
from pathlib import Path

import numpy as np

from .errors import FormatVersionError, MalformedFileError

FORMAT_VERSION = 1


def to_jsonable(obj):
    """Recursively turn numpy values into plain Python containers.

    Floats keep Python's shortest round-trip repr, which never needs more
    than 17 significant digits and reloads bit-exactly.
    """
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def dumps(obj):
    return json.dumps(to_jsonable(obj), allow_nan=False)


def write_json(path, obj):
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=1, allow_nan=False) + "\n")


def read_json(path, kind=None):
    """Load a JSON document and validate its ``format_version`` (and ``kind``)."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise MalformedFileError(f"{path}: expected a JSON object")
    check_header(doc, path, kind)
    return doc


def check_header(doc, path, kind=None):
    if "format_version" not in doc:
        raise MalformedFileError(f"{path}: missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: format_version {doc['format_version']!r} is not supported "
            f"(expected {FORMAT_VERSION})")
    if kind is not None and doc.get("kind") != kind:
        raise MalformedFileError(f"{path}: expected kind {kind!r}, found {doc.get('kind')!r}")


def read_jsonl(path, kind=None):
    """Return ``(header, records)`` from a JSON-lines artifact.

    Every line is one record tagged with ``format_version`` and ``kind``;
    the first line also carries the file-level ``meta`` block, which is
    merged into the returned header.
    """
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise MalformedFileError(f"{path}: empty file")
    records = []
    header = None
    for lineno, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedFileError(f"{path}:{lineno}: bad record ({exc})") from exc
        if not isinstance(rec, dict):
            raise MalformedFileError(f"{path}:{lineno}: record is not an object")
        check_header(rec, f"{path}:{lineno}", kind)
        if header is None:
            if not isinstance(rec.get("meta"), dict):
                raise MalformedFileError(f"{path}: first record lacks the meta block")
            header = dict(rec.pop("meta"), format_version=rec["format_version"], kind=rec.get("kind"))
        for key in ("format_version", "kind", "i"):
            rec.pop(key, None)
        records.append(rec)
    if "n" in header and header["n"] != len(records):
        raise MalformedFileError(
            f"{path}: meta announces {header['n']} records, found {len(records)}")
    return header, records


def write_jsonl(path, header, records):
    """Write one record per line; ``header`` becomes the first line's ``meta``."""
    tag = dict(format_version=header["format_version"], kind=header["kind"])
    meta = {k: v for k, v in header.items() if k not in tag}
    with open(path, "w") as fh:
        for i, rec in enumerate(records):
            line = dict(tag, i=i, **rec)
            if i == 0:
                line["meta"] = meta
            fh.write(dumps(line) + "\n")
