"""Weight files: ``b"CELW" | u16 version | u32 manifest length | manifest | f64 payload``.

The JSON manifest records the architecture and the ordered list of
``{"name", "shape"}`` blocks; the payload is every block, C-order,
little-endian float64, concatenated in manifest order. Optimizer moments,
when saved, are extra blocks named ``adam.m.<block>`` / ``adam.v.<block>``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError
from .adam import AdamState
from .model import ArchConfig, check_params

MAGIC = b"CELW"
VERSION = 1
_HEADER = struct.Struct("<4sHI")


def encode_weights(params: dict, arch: ArchConfig, optimizer: AdamState | None = None) -> bytes:
    blocks = dict(params)
    manifest = {"arch": arch.to_dict(), "blocks": [], "optimizer": None}
    if optimizer is not None and optimizer.m:
        manifest["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                                 "eps": optimizer.eps, "t": optimizer.t}
        for name in params:
            blocks[f"adam.m.{name}"] = optimizer.m[name]
            blocks[f"adam.v.{name}"] = optimizer.v[name]
    manifest["blocks"] = [{"name": n, "shape": list(a.shape)} for n, a in blocks.items()]
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in blocks.values())
    return _HEADER.pack(MAGIC, VERSION, len(blob)) + blob + payload


def decode_weights(data: bytes, expected_arch: ArchConfig | None = None):
    """Return ``(params, arch, optimizer_or_None)``.

    With ``expected_arch`` every block shape is checked against the running
    architecture and a :class:`ShapeError` names the first mismatch.
    """
    if len(data) < _HEADER.size:
        raise FormatError("file shorter than header", field="header", expected=_HEADER.size, found=len(data))
    magic, version, mlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("not a weight file", field="magic", expected=MAGIC, found=magic)
    if version != VERSION:
        raise FormatError("unsupported version", field="version", expected=VERSION, found=version)
    end = _HEADER.size + mlen
    if len(data) < end:
        raise FormatError("truncated manifest", field="manifest_length", expected=end, found=len(data))
    try:
        manifest = json.loads(data[_HEADER.size:end].decode("utf-8"))
        arch = ArchConfig.from_dict(manifest["arch"])
        blocks = [(str(b["name"]), tuple(int(d) for d in b["shape"])) for b in manifest["blocks"]]
        opt_meta = manifest.get("optimizer")
        optimizer = None if not opt_meta else AdamState(**opt_meta)
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"bad manifest ({exc})", field="manifest") from None
    names = [n for n, _ in blocks]
    if len(set(names)) != len(names) or any(d < 0 for _, s in blocks for d in s):
        raise FormatError("manifest has duplicate blocks or negative dimensions", field="blocks")
    expected_bytes = end + 8 * sum(int(np.prod(s)) for _, s in blocks)
    if len(data) != expected_bytes:
        raise FormatError("payload size mismatch", field="payload", expected=expected_bytes, found=len(data))
    if expected_arch is not None:
        want = expected_arch.shapes()
        found = dict(blocks)
        for name, shape in want.items():
            if name not in found:
                raise ShapeError(f"weight file lacks block {name}")
            if found[name] != shape:
                raise ShapeError(f"weight block {name} does not fit the running architecture",
                                 expected=shape, found=found[name])
    out, offset = {}, end
    for name, shape in blocks:
        n = int(np.prod(shape))
        out[name] = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * n
    missing = [n for n in arch.shapes() if n not in out]
    if optimizer is not None:
        missing += [f"adam.{k}.{n}" for k in "mv" for n in arch.shapes() if f"adam.{k}.{n}" not in out]
    if missing:
        raise FormatError("manifest lacks blocks", field="blocks", expected=missing)
    params = {n: out[n] for n in arch.shapes()}
    try:
        check_params(params, arch)
    except ShapeError as exc:
        raise FormatError(f"blocks do not match the stored architecture ({exc})", field="blocks") from None
    if optimizer is not None:
        optimizer.m = {n: out[f"adam.m.{n}"] for n in params}
        optimizer.v = {n: out[f"adam.v.{n}"] for n in params}
        if any(optimizer.m[n].shape != params[n].shape or optimizer.v[n].shape != params[n].shape for n in params):
            raise FormatError("optimizer moments do not match parameter shapes", field="blocks")
    return params, arch, optimizer


def write_weights(path, params: dict, arch: ArchConfig, optimizer: AdamState | None = None) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_weights(params, arch, optimizer))
    tmp.replace(path)
    return path


def read_weights(path, expected_arch: ArchConfig | None = None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weight file {path} does not exist")
    return decode_weights(path.read_bytes(), expected_arch)
