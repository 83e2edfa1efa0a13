"""Binary container for sampled white-noise paths (.wns files).

Layout, all little-endian:

  header, 32 bytes:  magic b"WNS1" | version u16 | reserved u16
                     | nt u32 | ny u32 | dt f64 | dy f64
  payload:           nt * ny float64 increments, row-major (time outer)
  footer, 16 bytes:  seed u64 | crc32 u32 of header+payload | reserved u32

The time origin is always 0 and the space window is symmetric, so (ny, dy)
determine the half width.  A missing or mangled tail fails the length or
checksum test rather than yielding a silently shortened path.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ChecksumMismatch, FormatVersionMismatch
from .noise import NoiseGrid, NoisePath

MAGIC = b"WNS1"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIdd")
_FOOTER = struct.Struct("<QII")
_NO_SEED = 0xFFFFFFFFFFFFFFFF


def write_path(path: NoisePath, destination: str | Path) -> None:
    grid = path.grid
    if grid.t0 != 0.0:
        raise ValueError("only paths starting at time 0 are serializable")
    header = _HEADER.pack(MAGIC, VERSION, 0, grid.nt, grid.ny, grid.dt, grid.dy)
    payload = np.ascontiguousarray(path.increments, dtype="<f8").tobytes()
    crc = zlib.crc32(payload, zlib.crc32(header))
    seed = _NO_SEED if path.seed is None else path.seed
    footer = _FOOTER.pack(seed, crc, 0)
    Path(destination).write_bytes(header + payload + footer)


def read_path(source: str | Path) -> NoisePath:
    raw = Path(source).read_bytes()
    if len(raw) < _HEADER.size + _FOOTER.size:
        raise ChecksumMismatch(f"{source}: file shorter than header plus footer")
    magic, version, _, nt, ny, dt, dy = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatVersionMismatch(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatVersionMismatch(f"{source}: version {version}, reader supports {VERSION}")
    expected = _HEADER.size + nt * ny * 8 + _FOOTER.size
    if len(raw) != expected:
        raise ChecksumMismatch(f"{source}: length {len(raw)} bytes, header implies {expected}")
    seed, crc, _ = _FOOTER.unpack_from(raw, expected - _FOOTER.size)
    body = raw[:expected - _FOOTER.size]
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch(f"{source}: checksum mismatch")
    increments = np.frombuffer(raw, dtype="<f8", count=nt * ny, offset=_HEADER.size)
    increments = increments.reshape(nt, ny).copy()
    grid = NoiseGrid(t1=nt * dt, dt=dt, half_width=0.5 * ny * dy, dy=dy)
    return NoisePath(grid=grid, increments=increments, seed=None if seed == _NO_SEED else int(seed))
