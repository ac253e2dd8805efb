"""Binary containers.

MGFD dataset layout (little-endian)::

    b"MGFD" | u32 version=1 | u32 ndim | u64 extent * ndim | u64 N
    | f64 inputs (N * prod(extents)) | f64 outputs (same count)
    | u64 byte length | UTF-8 JSON metadata

MGFT tensor-container layout (little-endian)::

    b"MGFT" | u32 version=1 | u32 count
    then per entry: u32 name length | UTF-8 name | u8 dtype (0 f64, 1 c128)
    | u32 ndim | u64 extent * ndim | raw data
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

DATASET_MAGIC = b"MGFD"
TENSOR_MAGIC = b"MGFT"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {"f": 0, "c": 1}


class FormatError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.outputs = np.ascontiguousarray(self.outputs, dtype=np.float64)
        if self.inputs.shape != self.outputs.shape:
            raise ValueError(f"input shape {self.inputs.shape} != output shape {self.outputs.shape}")
        if self.inputs.ndim < 2 or self.inputs.shape[0] < 1:
            raise ValueError("a dataset needs at least one sample and one grid axis")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def grid(self):
        return self.inputs.shape[1:]

    def subset(self, index):
        return Dataset(self.inputs[index], self.outputs[index], dict(self.metadata))


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def dataset_bytes(ds):
    meta = json.dumps(ds.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [DATASET_MAGIC, struct.pack("<II", VERSION, len(ds.grid))]
    parts.append(struct.pack(f"<{len(ds.grid)}Q", *ds.grid))
    parts.append(struct.pack("<Q", len(ds)))
    parts.append(ds.inputs.astype("<f8").tobytes())
    parts.append(ds.outputs.astype("<f8").tobytes())
    parts.append(struct.pack("<Q", len(meta)))
    parts.append(meta)
    return b"".join(parts)


def dataset_write(ds, path):
    data = dataset_bytes(ds)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def dataset_read(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != DATASET_MAGIC:
            raise FormatError(f"{path}: not an MGFD file")
        version, ndim = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported MGFD version {version}")
        grid = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, "extents"))
        (n,) = struct.unpack("<Q", _read_exact(fh, 8, "sample count"))
        count = n * int(np.prod(grid))
        shape = (n,) + tuple(grid)
        inputs = np.frombuffer(_read_exact(fh, 8 * count, "inputs"), dtype="<f8").reshape(shape)
        outputs = np.frombuffer(_read_exact(fh, 8 * count, "outputs"), dtype="<f8").reshape(shape)
        (mlen,) = struct.unpack("<Q", _read_exact(fh, 8, "metadata length"))
        meta = json.loads(_read_exact(fh, mlen, "metadata").decode("utf-8"))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after metadata")
    return Dataset(inputs.astype(np.float64), outputs.astype(np.float64), meta)


def tensors_write(tensors, path):
    """Write a ``{name: ndarray}`` mapping (real or complex) in insertion order."""
    parts = [TENSOR_MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value)
        code = _CODES.get(arr.dtype.kind)
        if code is None:
            raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<BI", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    data = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def tensors_read(path):
    out = {}
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != TENSOR_MAGIC:
            raise FormatError(f"{path}: not an MGFT file")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported MGFT version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, nlen, "name").decode("utf-8")
            code, ndim = struct.unpack("<BI", _read_exact(fh, 5, "entry header"))
            if code not in _DTYPES:
                raise FormatError(f"{path}: unknown dtype code {code} for {name}")
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, "extents"))
            dt = _DTYPES[code]
            size = int(np.prod(shape)) * dt.itemsize
            arr = np.frombuffer(_read_exact(fh, size, name), dtype=dt).reshape(shape)
            out[name] = arr.astype(np.complex128 if code else np.float64)
    return out


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
