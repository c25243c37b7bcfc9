"""The QMAG binary grid format and the plain-text matrix format.

QMAG layout (all little-endian)::

    b"QMAG"                 magic
    u32 version             currently 1
    u32 n                   quaternionic dimension
    u32 sides[4n]           grid side lengths
    u32 flags               bit 0: complex payload
    f64 payload[...]        row-major; complex values as (re, im) pairs

The payload holds ``count * prod(sides)`` values.  ``count > 1`` stores a
stack of grid functions (for example the rows of a Green kernel); it is
inferred from the file size.
"""
from __future__ import annotations

import struct

import numpy as np

from .hlinalg import check_hyperhermitian

__all__ = ["FormatError", "write_grid", "read_grid", "read_matrix_text", "write_matrix_text"]

MAGIC = b"QMAG"
VERSION = 1
FLAG_COMPLEX = 1


class FormatError(ValueError):
    pass


def write_grid(path, data, n, sides=None):
    """Write a grid function (or a stack of them) to ``path``."""
    data = np.asarray(data)
    if sides is None:
        sides = data.shape[-4 * n:]
    sides = tuple(int(s) for s in sides)
    if len(sides) != 4 * n:
        raise FormatError(f"need {4 * n} sides, got {len(sides)}")
    npts = int(np.prod(sides))
    if data.size % npts:
        raise FormatError(f"data of size {data.size} is not a stack of grids of {npts} points")
    is_complex = np.iscomplexobj(data)
    header = MAGIC + struct.pack(f"<II{len(sides)}II", VERSION, n, *sides, FLAG_COMPLEX if is_complex else 0)
    if is_complex:
        payload = np.ascontiguousarray(data, dtype="<c16").view("<f8")
    else:
        payload = np.ascontiguousarray(data, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes(order="C"))


def read_grid(path):
    """Returns ``(n, sides, data)``; ``data`` has shape ``sides`` or ``(count,) + sides``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a QMAG file")
    version, n = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if n < 1 or n > 64:
        raise FormatError(f"{path}: bad dimension n = {n}")
    off = 12
    need = off + 4 * (4 * n) + 4
    if len(raw) < need:
        raise FormatError(f"{path}: truncated header")
    sides = struct.unpack_from(f"<{4 * n}I", raw, off)
    off += 16 * n
    (flags,) = struct.unpack_from("<I", raw, off)
    off += 4
    if flags & ~FLAG_COMPLEX:
        raise FormatError(f"{path}: unknown flags {flags:#x}")
    if min(sides) < 1:
        raise FormatError(f"{path}: zero side length")
    is_complex = bool(flags & FLAG_COMPLEX)
    body = raw[off:]
    width = 16 if is_complex else 8
    npts = int(np.prod(sides))
    if len(body) == 0 or len(body) % (width * npts):
        raise FormatError(f"{path}: payload of {len(body)} bytes does not match grid {sides}")
    values = np.frombuffer(body, dtype="<c16" if is_complex else "<f8").copy()
    count = values.size // npts
    shape = tuple(sides) if count == 1 else (count,) + tuple(sides)
    return n, tuple(sides), values.reshape(shape)


def _parse_entry(tok, lineno):
    parts = tok.split(",")
    if len(parts) not in (1, 4):
        raise FormatError(f"line {lineno}: entry {tok!r} needs 1 or 4 comma-separated numbers")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise FormatError(f"line {lineno}: cannot parse {tok!r}") from None
    if not all(np.isfinite(vals)):
        raise FormatError(f"line {lineno}: non-finite entry {tok!r}")
    return vals + [0.0] * (4 - len(vals))


def read_matrix_text(path, check=True):
    """Read a quaternionic matrix: one row per line, entries separated by
    whitespace, each entry ``t`` or ``t,x,y,z``.  ``#`` starts a comment."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            rows.append((lineno, [_parse_entry(tok, lineno) for tok in line.split()]))
    if not rows:
        raise FormatError(f"{path}: no matrix rows")
    n = len(rows)
    for lineno, row in rows:
        if len(row) != n:
            raise FormatError(f"line {lineno}: expected {n} entries, got {len(row)}")
    A = np.array([row for _, row in rows], dtype=float)
    if check:
        try:
            check_hyperhermitian(A)
        except ValueError as exc:
            bad = _first_asymmetric_row(A)
            raise FormatError(f"line {rows[bad][0]}: {exc}") from None
    return A


def _first_asymmetric_row(A):
    conj = A * np.array([1.0, -1.0, -1.0, -1.0])
    defect = np.abs(A - np.swapaxes(conj, 0, 1)).max(axis=(1, 2))
    return int(np.argmax(defect))


def write_matrix_text(path, A):
    A = np.asarray(A, dtype=float)
    with open(path, "w") as fh:
        for row in A:
            fh.write(" ".join(",".join(repr(float(c)) for c in q) for q in row) + "\n")
