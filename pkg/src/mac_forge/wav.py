"""Mono 16-bit PCM WAV reading and writing.

Writing always produces the canonical 44-byte RIFF header.  Reading accepts
files with extra chunks (LIST, bext, ...) and only looks at ``fmt `` and
``data``; anything other than mono 16-bit PCM is rejected.
"""

from __future__ import annotations

import io
import os
import wave
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .util import atomic_write_bytes

PCM_MIN = -32768
PCM_MAX = 32767


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono audio.  ``samples`` may be float while being processed."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def to_pcm(self) -> "Waveform":
        """Round to the nearest integer and saturate to int16."""
        if self.samples.dtype == np.int16:
            return self
        pcm = np.clip(np.rint(self.samples), PCM_MIN, PCM_MAX).astype(np.int16)
        return Waveform(pcm, self.sample_rate)


def to_bytes(wav: Waveform) -> bytes:
    pcm = wav.to_pcm().samples
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(wav.sample_rate))
        w.writeframes(pcm.astype("<i2").tobytes())
    return buf.getvalue()


def from_bytes(data: bytes) -> Waveform:
    try:
        with wave.open(io.BytesIO(data), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            if channels != 1 or width != 2:
                raise FormatError(f"expected mono 16-bit PCM, got {channels} channel(s) of {8 * width} bits")
            frames = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"not a readable PCM WAV file: {exc}") from exc
    if len(frames) % 2:
        raise FormatError("data chunk has an odd number of bytes")
    return Waveform(np.frombuffer(frames, dtype="<i2").astype(np.int16), rate)


def write_wav(path, wav: Waveform) -> None:
    atomic_write_bytes(path, to_bytes(wav))


def read_wav(path) -> Waveform:
    with open(os.fspath(path), "rb") as f:
        return from_bytes(f.read())


def wav_info(path) -> tuple[int, int]:
    """``(num_samples, sample_rate)`` from the header alone."""
    try:
        with wave.open(os.fspath(path), "rb") as w:
            return w.getnframes(), w.getframerate()
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable PCM WAV file: {exc}") from exc
