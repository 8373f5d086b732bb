"""Binary cycle files: one file per cycle holding every cell.

Layout (all integers little-endian)::

    b"CELC" | u16 version | u32 manifest length | manifest (UTF-8 JSON)
    | f64 column blocks, one contiguous block of ``n_rows`` values per column

Columns are ``minute, I, T, X`` then one voltage column per cell, in the
order of ``manifest["cell_ids"]``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .dataprep import CycleSegment
from .errors import FormatError

MAGIC = b"CELC"
VERSION = 1
_HEADER = struct.Struct("<4sHI")
SUFFIX = ".celc"

_REQUIRED = ("electrolyzer_id", "cycle_index", "cell_ids", "n_rows", "startup_len", "scaled")


def encode_cycle(cycle: CycleSegment) -> bytes:
    manifest = {
        "electrolyzer_id": cycle.electrolyzer_id,
        "cycle_index": int(cycle.cycle_index),
        "cell_ids": list(cycle.cell_ids),
        "n_rows": int(cycle.n_rows),
        "startup_len": int(cycle.startup_len),
        "operation_len": int(cycle.operation_len),
        "scaled": bool(cycle.scaled),
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    columns = np.column_stack([cycle.minutes.astype("<f8"), cycle.features, cycle.volts])
    payload = np.asfortranarray(columns, dtype="<f8").tobytes(order="F")
    return _HEADER.pack(MAGIC, VERSION, len(blob)) + blob + payload


def decode_cycle(data: bytes) -> CycleSegment:
    if len(data) < _HEADER.size:
        raise FormatError("file shorter than header", field="header",
                          expected=_HEADER.size, found=len(data))
    magic, version, mlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("not a cycle file", field="magic", expected=MAGIC, found=magic)
    if version != VERSION:
        raise FormatError("unsupported version", field="version", expected=VERSION, found=version)
    end = _HEADER.size + mlen
    if len(data) < end:
        raise FormatError("truncated manifest", field="manifest_length", expected=end, found=len(data))
    try:
        manifest = json.loads(data[_HEADER.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"manifest is not valid JSON ({exc})", field="manifest") from None
    if not isinstance(manifest, dict):
        raise FormatError("manifest must be an object", field="manifest")
    for key in _REQUIRED:
        if key not in manifest:
            raise FormatError("manifest key missing", field=key)
    n = manifest["n_rows"]
    cell_ids = manifest["cell_ids"]
    if not isinstance(cell_ids, list) or not all(isinstance(c, str) for c in cell_ids):
        raise FormatError("cell ids must be a list of strings", field="cell_ids")
    n_cols = 4 + len(cell_ids)
    if not isinstance(n, int) or n < 0:
        raise FormatError("bad row count", field="n_rows", found=n)
    for key in ("startup_len", "cycle_index"):
        if not isinstance(manifest[key], int) or isinstance(manifest[key], bool):
            raise FormatError("expected an integer", field=key, found=manifest[key])
    if not isinstance(manifest["scaled"], bool):
        raise FormatError("expected a boolean", field="scaled", found=manifest["scaled"])
    if not 0 <= manifest["startup_len"] <= n:
        raise FormatError("startup longer than cycle", field="startup_len",
                          expected=f"<= {n}", found=manifest["startup_len"])
    expected = end + 8 * n * n_cols
    if len(data) != expected:
        raise FormatError("payload size mismatch", field="payload", expected=expected, found=len(data))
    cols = np.frombuffer(data, dtype="<f8", offset=end).reshape((n, n_cols), order="F")
    cols = np.array(cols, dtype=np.float64, order="C")
    minutes = cols[:, 0]
    if not np.all(np.isfinite(minutes)) or np.any(minutes != np.round(minutes)) or np.any(np.diff(minutes) <= 0):
        raise FormatError("minute column must hold increasing whole minutes", field="minute")
    return CycleSegment(
        electrolyzer_id=manifest["electrolyzer_id"],
        cycle_index=manifest["cycle_index"],
        minutes=minutes.astype(np.int64),
        features=np.ascontiguousarray(cols[:, 1:4]),
        volts=np.ascontiguousarray(cols[:, 4:]),
        startup_len=manifest["startup_len"],
        cell_ids=list(cell_ids),
        scaled=manifest["scaled"],
    )


def cycle_filename(cycle: CycleSegment) -> str:
    return f"{cycle.electrolyzer_id}_c{cycle.cycle_index:03d}{SUFFIX}"


def write_cycle(cycle: CycleSegment, path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_cycle(cycle))
    tmp.replace(path)
    return path


def read_cycle(path) -> CycleSegment:
    return decode_cycle(Path(path).read_bytes())


def write_cycles(cycles, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [write_cycle(c, directory / cycle_filename(c)) for c in cycles]


def list_cycle_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"cycle directory {directory} does not exist")
    return sorted(directory.glob(f"*{SUFFIX}"))


def read_cycles(directory) -> list[CycleSegment]:
    return [read_cycle(p) for p in list_cycle_files(directory)]
