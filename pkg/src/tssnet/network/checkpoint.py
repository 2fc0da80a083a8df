"""Checkpoint container: JSON header + raw little-endian float32 payloads.

Byte layout (documented for external readers):

    bytes 0..7    magic ``TSSNCKP1``
    bytes 8..11   uint32 little-endian header length L
    bytes 12..12+L  UTF-8 JSON header
    afterwards    tensor payloads, concatenated in header order

The header carries ``format_version``, the full layer plan (``spec``), its
content digest, the ordered class names, the preprocessing constants, and a
tensor index of ``{name, shape, offset, nbytes}`` entries with offsets
relative to the end of the header.  Tensors are always float32
little-endian, so a save/load/save round trip is byte-identical.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..datamodel import PreprocessSpec
from ..errors import CheckpointCorruptError, CheckpointIncompatibleError
from .model import Network
from .spec import NetworkSpec, parameter_shapes, spec_digest

MAGIC = b"TSSNCKP1"
FORMAT_VERSION = 1


def save_checkpoint(network: Network, path: str | os.PathLike) -> None:
    path = Path(path)
    tensors = []
    payloads = []
    offset = 0
    for name, value in network.params.items():
        raw = np.ascontiguousarray(value, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(value.shape),
                        "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "spec": network.spec.to_dict(),
        "spec_digest": spec_digest(network.spec),
        "class_names": list(network.class_names),
        "preprocess": network.preprocess.to_dict(),
        "tensors": tensors,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for raw in payloads:
            f.write(raw)
    os.replace(tmp, path)


def _read_header(path: Path) -> tuple[dict, int, int]:
    size = path.stat().st_size
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise CheckpointCorruptError(f"{path}: bad magic {magic!r}")
        (header_len,) = struct.unpack("<I", f.read(4))
        raw = f.read(header_len)
        if len(raw) != header_len:
            raise CheckpointCorruptError(f"{path}: truncated header")
        try:
            header = json.loads(raw)
        except json.JSONDecodeError as e:
            raise CheckpointCorruptError(f"{path}: unparsable header: {e}") from e
    return header, 12 + header_len, size


def load_checkpoint(path: str | os.PathLike,
                    expected_spec: NetworkSpec | None = None) -> Network:
    """Rebuild a network from a checkpoint file.

    With ``expected_spec`` the stored tensors must match that plan exactly;
    the first offending tensor is named otherwise.
    """
    path = Path(path)
    header, payload_start, file_size = _read_header(path)
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointIncompatibleError(
            f"{path}: unsupported format_version {header.get('format_version')!r}")
    spec = NetworkSpec.from_dict(header["spec"])
    if spec_digest(spec) != header.get("spec_digest"):
        raise CheckpointCorruptError(f"{path}: spec digest does not match stored layer plan")

    index = {t["name"]: t for t in header["tensors"]}
    check_spec = expected_spec if expected_spec is not None else spec
    for name, shape in parameter_shapes(check_spec).items():
        entry = index.get(name)
        if entry is None:
            raise CheckpointIncompatibleError(f"{path}: tensor {name!r} is missing")
        if tuple(entry["shape"]) != shape:
            raise CheckpointIncompatibleError(
                f"{path}: tensor {name!r} has shape {tuple(entry['shape'])}, expected {shape}")
    extra = set(index) - set(parameter_shapes(check_spec))
    if extra:
        raise CheckpointIncompatibleError(f"{path}: unexpected tensor {sorted(extra)[0]!r}")
    if expected_spec is not None and spec_digest(expected_spec) != header["spec_digest"]:
        raise CheckpointIncompatibleError(
            f"{path}: layer plan digest differs from the expected spec")

    total = sum(t["nbytes"] for t in header["tensors"])
    if payload_start + total != file_size:
        raise CheckpointCorruptError(
            f"{path}: payload is {file_size - payload_start} bytes, index declares {total}")

    params: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        for entry in header["tensors"]:
            expected_nbytes = 4 * int(np.prod(entry["shape"])) if entry["shape"] else 4
            if entry["nbytes"] != expected_nbytes:
                raise CheckpointCorruptError(
                    f"{path}: tensor {entry['name']!r} declares {entry['nbytes']} bytes "
                    f"but its shape needs {expected_nbytes}")
            f.seek(payload_start + entry["offset"])
            raw = f.read(entry["nbytes"])
            if len(raw) != entry["nbytes"]:
                raise CheckpointCorruptError(f"{path}: truncated tensor {entry['name']!r}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
            params[entry["name"]] = arr.astype(np.float32)

    return Network(spec, params, class_names=tuple(header["class_names"]),
                   preprocess=PreprocessSpec.from_dict(header["preprocess"]))
