"""Binary eigenstate store: one file per solver window plus a text manifest.

File layout (all little-endian)::

    offset  type        content
    0       8 bytes     magic b"QSTADWIN"
    8       uint32      format version (currently 1)
    12      uint32      number of states  n
    16      uint32      real-direction count        Na
    20      uint32      top evanescent count        Nt
    24      uint32      side evanescent count       Ns
    28      uint32      reserved (0)
    32      16 bytes    config hash, ASCII hex (zero-padded)
    48      7 x f8      l, h, scale, hbar, m, k_center, k_ref
    104     records     n records, each:
                          f8 k, f8 E, f8 boundary residual, f8 index,
                          Na x f8 direction angles,
                          Nt x f8 top rates, Ns x f8 side rates,
                          (Na+Nt+Ns) x f8 coefficients
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from ..geometry import BilliardGeometry
from .basis import PlaneWaveBasis
from .scaling import EigenState

__all__ = ["FORMAT_VERSION", "StoreFormatError", "write_window", "read_window",
           "write_manifest", "read_manifest", "load_states", "ManifestEntry"]

MAGIC = b"QSTADWIN"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<8s6I16s7d")


class StoreFormatError(ValueError):
    pass


def _atomic_write_bytes(path, data: bytes):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_window(states, k_center: float, config_hash: str = "") -> bytes:
    if not states:
        raise ValueError("cannot encode an empty window")
    s0 = states[0]
    basis = s0.basis
    na, nt, ns = basis.counts
    g = s0.geometry
    parts = [_HEAD.pack(MAGIC, FORMAT_VERSION, len(states), na, nt, ns, 0,
                        config_hash.encode("ascii")[:16].ljust(16, b"\0"), g.l, g.h, g.scale, s0.hbar, s0.m, k_center, basis.k_ref)]
    for s in states:
        if s.basis is not basis and s.basis.counts != basis.counts:
            raise ValueError("all states in a window must share one basis layout")
        rec = np.concatenate([[s.k, s.energy, s.residual, float(s.index)],
                              s.basis.angles, s.basis.top_rates, s.basis.side_rates, s.coeffs])
        parts.append(rec.astype("<f8").tobytes())
    return b"".join(parts)


def write_window(path, states, k_center: float, config_hash: str = ""):
    _atomic_write_bytes(path, encode_window(states, k_center, config_hash))


def read_window(path):
    """Return ``(header dict, list[EigenState])``; rejects unknown versions."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise StoreFormatError(f"{path}: truncated header")
    magic, version = struct.unpack_from("<8sI", data, 0)
    if magic != MAGIC:
        raise StoreFormatError(f"{path}: not an eigenstate window file")
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(data) < _HEAD.size:
        raise StoreFormatError(f"{path}: truncated header")
    _m, _v, n, na, nt, ns, _r, chash, l, h, scale, hbar, m, k_center, k_ref = \
        _HEAD.unpack_from(data, 0)
    nb = na + nt + ns
    rec_len = 4 + 2 * nb
    body = np.frombuffer(data, dtype="<f8", offset=_HEAD.size)
    if body.size != n * rec_len:
        raise StoreFormatError(f"{path}: record block has wrong length")
    geom = BilliardGeometry(l, h, scale)
    header = dict(version=version, config_hash=chash.rstrip(b"\0").decode("ascii"),
                  n_states=n, counts=(na, nt, ns), geometry=geom,
                  hbar=hbar, m=m, k_center=k_center, k_ref=k_ref)
    states = []
    basis = None
    for rec in body.reshape(n, rec_len):
        rec = rec.astype(float)
        k, E, res, idx = rec[:4]
        a = rec[4:4 + na]
        t = rec[4 + na:4 + na + nt]
        sr = rec[4 + na + nt:4 + nb]
        if basis is None or not (np.array_equal(basis.angles, a) and
                                 np.array_equal(basis.top_rates, t) and
                                 np.array_equal(basis.side_rates, sr)):
            basis = PlaneWaveBasis(a, t, sr, k_ref, geom.height, geom.width)
        states.append(EigenState(int(idx), float(k), float(E), hbar, m, basis,
                                 rec[4 + nb:].copy(), float(res), geom))
    return header, states


@dataclass(frozen=True)
class ManifestEntry:
    file: str
    k_center: float
    n_states: int
    k_first: float
    k_last: float


def write_manifest(path, entries, header_lines=()):
    lines = [f"# {h}" for h in header_lines]
    lines.append("file\tk_center\tn_states\tk_first\tk_last")
    for e in entries:
        lines.append(f"{e.file}\t{e.k_center!r}\t{e.n_states}\t{e.k_first!r}\t{e.k_last!r}")
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def read_manifest(path):
    entries, comments = [], []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                comments.append(line[1:].strip())
                continue
            if not line or line.startswith("file\t"):
                continue
            f, kc, n, a, b = line.split("\t")
            entries.append(ManifestEntry(f, float(kc), int(n), float(a), float(b)))
    return entries, comments


def load_states(manifest_path):
    """All states listed by a manifest, sorted by k."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    entries, _ = read_manifest(manifest_path)
    states = []
    for e in entries:
        _, st = read_window(os.path.join(base, e.file))
        states.extend(st)
    states.sort(key=lambda s: s.k)
    return states
