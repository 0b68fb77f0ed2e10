"""Model checkpoints.

Layout: magic ``CIM1``, a u32 little-endian length, a UTF-8 JSON header
holding the model configuration and each tensor's shape, then the raw
tensor values as little-endian float32 in sorted key order.  Values are
stored at float32 and upcast to float64 on load, so a save/load round
trip is exact only after a float32 cast.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, MissingInputError
from .config import ContextVariant, ModelConfig
from .network import CimParameters, parameter_shapes

MAGIC = b"CIM1"


def save_checkpoint(params: CimParameters, path) -> None:
    cfg = params.config
    header = {
        "variant": cfg.variant.value,
        "input_dim": cfg.input_dim,
        "hidden": cfg.hidden,
        "layers": cfg.layers,
        "num_docs": cfg.num_docs,
        "source_dim": cfg.source_dim,
        "num_classes": cfg.num_classes,
        "tensors": {k: list(v.shape) for k, v in sorted(params.tensors.items())},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for key in sorted(params.tensors):
            fh.write(np.ascontiguousarray(params.tensors[key], dtype="<f4").tobytes())


def load_checkpoint(path) -> CimParameters:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise MissingInputError(f"checkpoint file not found: {path}") from exc
    if len(data) < 8 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a CIM1 checkpoint")
    (header_len,) = struct.unpack_from("<I", data, 4)
    end = 8 + header_len
    if len(data) < end:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[8:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad header: {exc}") from None
    for fld in ("variant", "input_dim", "hidden", "layers", "num_docs",
                "source_dim", "num_classes", "tensors"):
        if fld not in header:
            raise FormatError(f"{path}: header missing {fld!r}")

    cfg = ModelConfig(
        variant=ContextVariant.parse(header["variant"]),
        input_dim=int(header["input_dim"]),
        hidden=int(header["hidden"]),
        layers=int(header["layers"]),
        num_docs=int(header["num_docs"]),
        source_dim=int(header["source_dim"]),
        num_classes=int(header["num_classes"]),
    )
    expected = parameter_shapes(cfg)
    declared = {k: tuple(v) for k, v in header["tensors"].items()}
    if declared != expected:
        raise FormatError(
            f"{path}: tensor table does not match the declared configuration"
        )

    tensors: dict[str, np.ndarray] = {}
    offset = end
    for key in sorted(declared):
        shape = declared[key]
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise FormatError(f"{path}: truncated tensor {key!r}")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        tensors[key] = arr.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing byte(s)")
    return CimParameters(config=cfg, tensors=tensors)
