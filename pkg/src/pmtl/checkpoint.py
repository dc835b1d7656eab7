"""Flat binary checkpoint container.

Layout, all little-endian:

    magic   ``PMCK``
    u16     format version (currently 1)
    u32     header length in bytes
    bytes   UTF-8 JSON header with sorted keys:
            config        model configuration dict
            age_scaler    {"mean": float, "std": float}
            standardizer  {"mode":..., "degenerate_columns":[...]} or null
            tensors       [[name, [dims...]], ...] model parameters
            aux           [[name, [dims...]], ...] standardizer arrays
    bytes   float64 payload: each tensor row-major, in header order,
            ``tensors`` first then ``aux``

Tensor names are sorted lexicographically, so identical parameter sets
serialize to identical bytes and a save/load cycle is bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import AgeScaler, Standardizer
from .errors import DataFormatError
from .model import ModelConfig

MAGIC = b"PMCK"
VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    params: dict[str, np.ndarray]
    config: ModelConfig
    age_scaler: AgeScaler
    standardizer: Standardizer | None


def _tensor_index(tensors: dict[str, np.ndarray]) -> list[list]:
    return [[name, list(tensors[name].shape)] for name in sorted(tensors)]


def save_checkpoint(path, params: dict[str, np.ndarray], config: ModelConfig,
                    age_scaler: AgeScaler, standardizer: Standardizer | None = None) -> None:
    aux: dict[str, np.ndarray] = {}
    std_meta = None
    if standardizer is not None:
        aux["standardizer.center"] = np.asarray(standardizer.center, dtype=np.float64)
        aux["standardizer.scale"] = np.asarray(standardizer.scale, dtype=np.float64)
        std_meta = {
            "mode": standardizer.mode,
            "degenerate_columns": list(standardizer.degenerate_columns),
        }
    header = {
        "age_scaler": {"mean": age_scaler.mean, "std": age_scaler.std},
        "aux": _tensor_index(aux),
        "config": config.to_dict(),
        "standardizer": std_meta,
        "tensors": _tensor_index(params),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for name, _ in header["tensors"]:
            fh.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
        for name, _ in header["aux"]:
            fh.write(np.ascontiguousarray(aux[name], dtype="<f8").tobytes())


def _read_tensors(index, payload, offset, path):
    out = {}
    for entry in index:
        name, shape = entry[0], tuple(int(v) for v in entry[1])
        size = int(np.prod(shape, dtype=np.int64)) * 8
        chunk = payload[offset:offset + size]
        if len(chunk) != size:
            raise DataFormatError(f"truncated payload for tensor {name!r}", path)
        out[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += size
    return out, offset


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataFormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}", path)
    try:
        version, header_len = struct.unpack_from("<HI", blob, 4)
    except struct.error:
        raise DataFormatError("truncated header", path)
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", path)
    header_raw = blob[10:10 + header_len]
    if len(header_raw) != header_len:
        raise DataFormatError("truncated header", path)
    try:
        header = json.loads(header_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"bad header JSON: {exc}", path)

    for key in ("age_scaler", "config", "tensors", "aux"):
        if key not in header:
            raise DataFormatError(f"header missing {key!r}", path)
    payload = blob[10 + header_len:]
    params, offset = _read_tensors(header["tensors"], payload, 0, path)
    aux, offset = _read_tensors(header["aux"], payload, offset, path)
    if offset != len(payload):
        raise DataFormatError(f"{len(payload) - offset} trailing payload bytes", path)

    try:
        config = ModelConfig.from_dict(header["config"])
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"bad model config: {exc}", path)
    scaler = AgeScaler(mean=float(header["age_scaler"]["mean"]),
                       std=float(header["age_scaler"]["std"]))
    standardizer = None
    if header.get("standardizer") is not None:
        meta = header["standardizer"]
        standardizer = Standardizer(
            mode=meta["mode"],
            center=aux["standardizer.center"],
            scale=aux["standardizer.scale"],
            degenerate_columns=tuple(int(c) for c in meta["degenerate_columns"]),
        )
    return Checkpoint(params=params, config=config, age_scaler=scaler,
                      standardizer=standardizer)
