"""Binary field snapshots (``IINS`` format, version 1).

Layout, little-endian throughout::

    b"IINS"  u32 version  u32 nx  u32 nz  f64 Lx  f64 h  f64 t
    f64[nz*nx] rho   f64[nz*nx] u1   f64[(nz+1)*nx] u2   f64[nz*nx] P

Arrays are row-major with x varying fastest.  The wall condition is not part
of the format; readers supply it.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .grid import Grid, NO_SLIP, VectorField

MAGIC = b"IINS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")


class SnapshotError(ValueError):
    pass


@dataclass
class Snapshot:
    grid: Grid
    t: float
    rho: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    P: np.ndarray

    def velocity(self, bc=NO_SLIP):
        return VectorField(self.grid, self.u1, self.u2, bc)


def to_bytes(snap):
    g = snap.grid
    parts = [_HEADER.pack(MAGIC, VERSION, g.nx, g.nz, g.Lx, g.h, float(snap.t))]
    for a, shape in ((snap.rho, (g.nz, g.nx)), (snap.u1, (g.nz, g.nx)),
                     (snap.u2, (g.nz + 1, g.nx)), (snap.P, (g.nz, g.nx))):
        a = np.asarray(a, dtype="<f8")
        if a.shape != shape:
            raise SnapshotError(f"array of shape {a.shape} where {shape} expected")
        parts.append(np.ascontiguousarray(a).tobytes())
    return b"".join(parts)


def from_bytes(buf):
    if len(buf) < _HEADER.size:
        raise SnapshotError("truncated snapshot header")
    magic, version, nx, nz, Lx, h, t = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    grid = Grid(nx, nz, Lx, h)
    sizes = [(nz, nx), (nz, nx), (nz + 1, nx), (nz, nx)]
    need = _HEADER.size + 8 * sum(a * b for a, b in sizes)
    if len(buf) != need:
        raise SnapshotError(f"snapshot has {len(buf)} bytes, expected {need}")
    off = _HEADER.size
    arrays = []
    for shape in sizes:
        n = shape[0] * shape[1]
        arrays.append(np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).astype(float))
        off += 8 * n
    return Snapshot(grid, t, *arrays)


def write(path, snap):
    with open(path, "wb") as fh:
        fh.write(to_bytes(snap))


def read(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
