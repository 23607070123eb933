"""Raw tensor files: a little-endian float64 payload plus a JSON sidecar.

``name.f64`` holds the row-major payload; ``name.json`` records shape,
dtype tag, semantic name and the payload's CRC32.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DTYPE_TAG = "f64le"


class TensorFileError(ValueError):
    pass


@dataclass(frozen=True)
class TensorFile:
    path: Path  # payload path; the sidecar shares its stem
    shape: tuple[int, ...]
    name: str
    crc32: int

    @property
    def sidecar(self) -> Path:
        return self.path.with_suffix(".json")


def _paths(base) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix in (".f64", ".json"):
        base = base.with_suffix("")
    return base.with_suffix(".f64"), base.with_suffix(".json")


def write(base, array, name: str | None = None) -> TensorFile:
    payload_path, meta_path = _paths(base)
    arr = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    data = arr.tobytes(order="C")
    crc = zlib.crc32(data)
    meta = {"shape": list(arr.shape), "dtype": DTYPE_TAG, "name": name or payload_path.stem, "crc32": crc}
    payload_path.parent.mkdir(parents=True, exist_ok=True)
    payload_path.write_bytes(data)
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return TensorFile(payload_path, tuple(arr.shape), meta["name"], crc)


def read_meta(base) -> dict:
    _, meta_path = _paths(base)
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise TensorFileError(f"missing sidecar {meta_path}") from None
    for key in ("shape", "dtype", "name", "crc32"):
        if key not in meta:
            raise TensorFileError(f"{meta_path}: sidecar lacks {key!r}")
    if meta["dtype"] != DTYPE_TAG:
        raise TensorFileError(f"{meta_path}: unsupported dtype {meta['dtype']!r}")
    return meta


def read(base) -> np.ndarray:
    payload_path, _ = _paths(base)
    meta = read_meta(base)
    data = payload_path.read_bytes()
    shape = tuple(int(n) for n in meta["shape"])
    expected = 8 * int(np.prod(shape, dtype=np.int64))
    if len(data) != expected:
        raise TensorFileError(f"{payload_path}: payload is {len(data)} bytes, shape {shape} needs {expected}")
    if zlib.crc32(data) != meta["crc32"]:
        raise TensorFileError(f"{payload_path}: checksum mismatch")
    return np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64)
