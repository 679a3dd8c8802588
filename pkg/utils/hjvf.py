"""
HJVF 值函数快照二进制格式（小端）：

    b"HJVF" | uint32 version | uint32 ndim | uint32 counts[ndim]
    | float64 mins[ndim] | float64 maxs[ndim] | uint8 periodic[ndim]
    | float64 timestamp | float64 values[prod(counts)]（行优先）
"""
import struct
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from reach.gridfield import Grid, ScalarField

MAGIC = b"HJVF"
VERSION = 1


class HjvfFormatError(ValueError):
    pass


def encode_field(field: ScalarField, timestamp: float) -> bytes:
    grid = field.grid
    n = grid.ndim
    header = MAGIC + struct.pack(f"<II{n}I", VERSION, n, *grid.counts)
    header += struct.pack(f"<{n}d{n}d", *grid.mins, *grid.maxs)
    header += struct.pack(f"<{n}B", *[1 if p else 0 for p in grid.periodic])
    header += struct.pack("<d", float(timestamp))
    return header + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def decode_field(blob: bytes) -> Tuple[ScalarField, float]:
    if blob[:4] != MAGIC:
        raise HjvfFormatError("bad magic")
    try:
        version, n = struct.unpack_from("<II", blob, 4)
    except struct.error as e:
        raise HjvfFormatError(f"truncated header: {e}") from e
    if version != VERSION:
        raise HjvfFormatError(f"unsupported version {version}")
    offset = 12
    if len(blob) < offset + 21 * n + 8:
        raise HjvfFormatError("truncated header")
    counts = struct.unpack_from(f"<{n}I", blob, offset)
    offset += 4 * n
    bounds = struct.unpack_from(f"<{2 * n}d", blob, offset)
    offset += 16 * n
    periodic = struct.unpack_from(f"<{n}B", blob, offset)
    offset += n
    (timestamp,) = struct.unpack_from("<d", blob, offset)
    offset += 8
    size = int(np.prod(counts))
    if len(blob) != offset + 8 * size:
        raise HjvfFormatError(f"expected {size} values, got {(len(blob) - offset) // 8}")
    values = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
    grid = Grid(tuple(bounds[:n]), tuple(bounds[n:]), tuple(counts), tuple(bool(p) for p in periodic))
    return ScalarField(grid, values.reshape(grid.shape).astype(float)), timestamp


def write_field(path, field: ScalarField, timestamp: float) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_field(field, timestamp))
    return path


def read_field(path) -> Tuple[ScalarField, float]:
    return decode_field(Path(path).read_bytes())


def write_sequence(directory, prefix: str, times: Sequence[float],
                   fields: Sequence[ScalarField]) -> List[Dict[str, object]]:
    """按时间顺序写出快照，返回清单条目 [{"t":..., "file":...}]。"""
    directory = Path(directory)
    entries = []
    for k, (t, f) in enumerate(zip(times, fields)):
        name = f"{prefix}_{k:04d}.hjvf"
        write_field(directory / name, f, t)
        entries.append({"t": float(t), "file": name})
    return entries


def read_sequence(directory, entries: Sequence[Dict[str, object]]) -> Tuple[np.ndarray, List[ScalarField]]:
    directory = Path(directory)
    times, fields = [], []
    for entry in entries:
        f, _ = read_field(directory / str(entry["file"]))
        times.append(float(entry["t"]))
        fields.append(f)
    return np.array(times), fields
