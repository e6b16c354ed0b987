"""Frame-level emission matrices and the ``.mace`` binary format.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"MACE"
    4       2     version (u16, currently 1)
    6       4     T frames (u32)
    10      4     K labels (u32)
    14      4     frame_hop in samples (u32)
    18      4     sample_rate in Hz (u32)
    22      32    SHA-256 digest of the meta-audio set file
    54      4*T*K float32 natural-log posteriors, row-major
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .errors import (
    BadMagicError,
    FormatError,
    HashMismatchError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .util import atomic_write_bytes

MAGIC = b"MACE"
VERSION = 1
_HEADER = struct.Struct("<4sHIIII")
HEADER_SIZE = _HEADER.size + 32


@dataclass(frozen=True, eq=False)
class EmissionMatrix:
    """T x K natural-log posteriors for one utterance."""

    logp: np.ndarray
    frame_hop: int = 160
    sample_rate: int = 16000
    normalized: bool = False
    meta_hash: str | None = None

    def __post_init__(self):
        logp = np.asarray(self.logp, dtype=np.float64)
        if logp.ndim != 2 or logp.shape[0] < 1 or logp.shape[1] < 1:
            raise FormatError(f"emission matrix must be T x K with T, K >= 1, got shape {logp.shape}")
        if np.isnan(logp).any():
            raise FormatError("emission matrix contains NaN")
        if (logp > 0).any():
            raise FormatError("log-posteriors must be <= 0 (enable renormalization for logits)")
        if self.frame_hop <= 0 or self.sample_rate <= 0:
            raise FormatError("frame_hop and sample_rate must be positive")
        logp.setflags(write=False)
        object.__setattr__(self, "logp", logp)

    @property
    def num_frames(self) -> int:
        return self.logp.shape[0]

    @property
    def num_labels(self) -> int:
        return self.logp.shape[1]

    @classmethod
    def from_logits(cls, logits, **kwargs) -> "EmissionMatrix":
        """Build from unnormalized scores by a per-row log-softmax."""
        logits = np.asarray(logits, dtype=np.float64)
        return cls(log_softmax(logits, axis=1), normalized=True, **kwargs)


def to_bytes(em: EmissionMatrix, meta_hash: str | None = None) -> bytes:
    digest = meta_hash if meta_hash is not None else em.meta_hash
    if digest is None:
        raise ValueError("a meta-audio set hash is required to write a .mace file")
    raw = bytes.fromhex(digest)
    if len(raw) != 32:
        raise ValueError("meta-audio set hash must be a hex SHA-256 digest")
    header = _HEADER.pack(MAGIC, VERSION, em.num_frames, em.num_labels, em.frame_hop, em.sample_rate)
    payload = np.ascontiguousarray(em.logp, dtype="<f4").tobytes()
    return header + raw + payload


def from_bytes(
    data: bytes, expected_hash: str | None = None, renormalize: bool = False
) -> EmissionMatrix:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedFileError(f"header truncated: {len(data)} of {HEADER_SIZE} bytes")
    _, version, frames, labels, hop, rate = _HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported .mace version {version}")
    digest = data[_HEADER.size:HEADER_SIZE].hex()
    if expected_hash is not None and digest != expected_hash.lower():
        raise HashMismatchError(
            f"emission file was made for meta-audio set {digest[:12]}..., expected {expected_hash[:12]}..."
        )
    need = HEADER_SIZE + 4 * frames * labels
    if len(data) < need:
        raise TruncatedFileError(f"payload truncated: {len(data)} of {need} bytes")
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes after payload")
    logp = np.frombuffer(data, dtype="<f4", count=frames * labels, offset=HEADER_SIZE)
    logp = logp.astype(np.float64).reshape(frames, labels)
    if renormalize:
        return EmissionMatrix.from_logits(logp, frame_hop=hop, sample_rate=rate, meta_hash=digest)
    return EmissionMatrix(logp, frame_hop=hop, sample_rate=rate, meta_hash=digest)


def write_mace(path, em: EmissionMatrix, meta_hash: str | None = None) -> None:
    atomic_write_bytes(path, to_bytes(em, meta_hash))


def read_mace(path, expected_hash: str | None = None, renormalize: bool = False) -> EmissionMatrix:
    with open(os.fspath(path), "rb") as f:
        data = f.read()
    return from_bytes(data, expected_hash, renormalize)


def file_sha256(path) -> str:
    with open(os.fspath(path), "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
