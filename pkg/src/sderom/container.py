"""Single-file array container: one JSON manifest line, then raw payload.

Layout::

    <manifest JSON, one line, UTF-8>\n<payload bytes>

The manifest's ``arrays`` list gives name/shape/offset per stored array.
Offsets are bytes relative to the start of the payload section; every array
is little-endian float64 in row-major (C) order.  Manifest keys are sorted
so identical content serializes to identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import MalformedManifestError, TruncatedPayloadError

FORMAT_VERSION = 1


def write_container(path, kind: str, meta: dict, arrays) -> None:
    """Write named arrays plus metadata to ``path``.

    ``arrays`` is an ordered iterable of ``(name, array)`` pairs; order is
    preserved in the manifest and payload.
    """
    entries = []
    payloads = []
    offset = 0
    seen = set()
    for name, arr in arrays:
        if name in seen:
            raise ValueError(f"duplicate array name {name!r}")
        seen.add(name)
        a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        raw = a.astype("<f8", copy=False).tobytes(order="C")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": entries,
    }
    line = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        fh.write(b"\n")
        for raw in payloads:
            fh.write(raw)


def read_container(path):
    """Read a container; returns ``(manifest, {name: array})``.

    Raises :class:`MalformedManifestError` for an unreadable or
    structurally invalid manifest and :class:`TruncatedPayloadError` when a
    declared array extends past the stored payload.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise MalformedManifestError("no newline-terminated manifest line")
    try:
        manifest = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise MalformedManifestError("manifest must be a JSON object")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise MalformedManifestError(
            f"unsupported format_version {manifest.get('format_version')!r}"
        )
    for key in ("kind", "meta", "arrays"):
        if key not in manifest:
            raise MalformedManifestError(f"manifest missing key {key!r}")
    if not isinstance(manifest["arrays"], list):
        raise MalformedManifestError("manifest 'arrays' must be a list")

    payload = raw[newline + 1 :]
    arrays = {}
    for entry in manifest["arrays"]:
        if not isinstance(entry, dict) or not {"name", "shape", "offset"} <= set(entry):
            raise MalformedManifestError(f"bad array entry: {entry!r}")
        name = entry["name"]
        if name in arrays:
            raise MalformedManifestError(f"duplicate array name {name!r}")
        shape = entry["shape"]
        offset = entry["offset"]
        if (
            not isinstance(name, str)
            or not isinstance(shape, list)
            or not all(isinstance(s, int) and s >= 0 for s in shape)
            or not isinstance(offset, int)
            or offset < 0
        ):
            raise MalformedManifestError(f"bad array entry: {entry!r}")
        count = 1
        for s in shape:
            count *= s
        nbytes = count * 8
        if offset + nbytes > len(payload):
            raise TruncatedPayloadError(
                f"array {name!r} needs payload bytes [{offset}, {offset + nbytes}) "
                f"but only {len(payload)} are present"
            )
        flat = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays[name] = np.array(flat, dtype=np.float64).reshape(shape)
    return manifest, arrays
