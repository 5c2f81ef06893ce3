"""Manifest + flat little-endian blob storage for named arrays.

A container is a directory holding ``manifest.txt`` and ``data.bin``.  The
manifest is plain text: a format line, one ``# meta:`` JSON line, then one
tab-separated row per array (name, dtype, shape, byte offset, byte count).
Arrays are written in manifest order, so a round trip is bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_LINE = "# modscc-container 1"


class ContainerError(ValueError):
    pass


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [FORMAT_LINE, "# meta: " + json.dumps(meta or {}, sort_keys=True)]
    offset = 0
    with open(path / "data.bin", "wb") as fh:
        for name, arr in arrays.items():
            if "\t" in name or "\n" in name:
                raise ContainerError(f"array name {name!r} contains a tab or newline")
            arr = np.asarray(arr)
            arr = arr if arr.flags.c_contiguous else arr.copy(order="C")
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            raw = le.tobytes()
            fh.write(raw)
            shape = ",".join(str(s) for s in arr.shape)
            lines.append(f"{name}\t{le.dtype.str}\t{shape}\t{offset}\t{len(raw)}")
            offset += len(raw)
    (path / "manifest.txt").write_text("\n".join(lines) + "\n")
    return path


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        lines = (path / "manifest.txt").read_text().splitlines()
        blob = (path / "data.bin").read_bytes()
    except FileNotFoundError as exc:
        raise ContainerError(f"incomplete container at {path}: {exc.filename} missing") from None
    if not lines or lines[0] != FORMAT_LINE:
        raise ContainerError(f"{path}/manifest.txt is not a modscc container manifest")
    meta = {}
    arrays = {}
    for line in lines[1:]:
        if line.startswith("# meta: "):
            meta = json.loads(line[len("# meta: "):])
            continue
        if not line or line.startswith("#"):
            continue
        name, dtype, shape, offset, nbytes = line.split("\t")
        shape_t = tuple(int(s) for s in shape.split(",")) if shape else ()
        offset, nbytes = int(offset), int(nbytes)
        if offset + nbytes > len(blob):
            raise ContainerError(f"array {name!r} extends past the end of data.bin")
        arr = np.frombuffer(blob, dtype=np.dtype(dtype), count=nbytes // np.dtype(dtype).itemsize, offset=offset)
        arrays[name] = arr.reshape(shape_t).astype(np.dtype(dtype).newbyteorder("="))
    return arrays, meta
