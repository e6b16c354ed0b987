"""Energy normalization and concatenation of clips.

Energy here is the L2 norm of the sample vector.  Before concatenation every
selected clip is rescaled to the mean energy of the selection, which evens
out loudness jumps between clips recorded in different conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CoverageError, SampleRateMismatchError
from .wav import PCM_MAX, PCM_MIN, Waveform

SILENCE_EPS = 1e-12


def _samples(clip) -> np.ndarray:
    if isinstance(clip, Waveform):
        clip = clip.samples
    elif hasattr(clip, "samples"):
        clip = clip.samples
    return np.asarray(clip, dtype=np.float64)


def energy(clip) -> float:
    return float(np.linalg.norm(_samples(clip)))


def mean_energy(clips: Sequence) -> float:
    """Mean energy over the non-silent clips (0.0 if every clip is silent)."""
    if len(clips) == 0:
        raise ValueError("mean_energy needs at least one clip")
    norms = [energy(c) for c in clips]
    loud = [e for e in norms if e >= SILENCE_EPS]
    return sum(loud) / len(loud) if loud else 0.0


@dataclass
class Normalized:
    clips: list[np.ndarray]
    target: float
    clamp_events: int = 0


def normalize_clips(clips: Sequence) -> Normalized:
    """Scale every non-silent clip to the mean energy.

    Silent clips pass through.  Scaled values beyond the int16 range are
    saturated and each saturated sample counts as one clamp event.
    """
    arrays = [_samples(c) for c in clips]
    if not arrays:
        raise ValueError("normalize_clips needs at least one clip")
    target = mean_energy(arrays)
    out, clamped = [], 0
    for x in arrays:
        norm = float(np.linalg.norm(x))
        if norm < SILENCE_EPS:
            out.append(x.copy())
            continue
        y = x * (target / norm)
        over = (y > PCM_MAX) | (y < PCM_MIN)
        if over.any():
            clamped += int(over.sum())
            y = np.clip(y, PCM_MIN, PCM_MAX)
        out.append(y)
    return Normalized(out, target, clamped)


def concatenate(clips: Sequence[Waveform]) -> Waveform:
    if not clips:
        raise ValueError("nothing to concatenate")
    rates = {c.sample_rate for c in clips}
    if len(rates) != 1:
        raise SampleRateMismatchError(f"clips have mixed sample rates {sorted(rates)}")
    return Waveform(np.concatenate([c.samples for c in clips]), rates.pop())


@dataclass
class SynthResult:
    waveform: Waveform
    provenance: list[tuple[int, str, int]] = field(default_factory=list)
    clamp_events: int = 0


def synthesize_utterance(db, seq: Sequence[int], policy, rng) -> SynthResult:
    """Select one clip per meta-audio id, normalize, and concatenate.

    ``provenance`` lists ``(meta_id, utt_id, ordinal)`` for every chosen clip.
    The output waveform is quantized to int16.
    """
    from .sampler import select_clip

    missing = [i for i in seq if not db.query(i)]
    if missing:
        raise CoverageError(missing)
    chosen = [select_clip(db.query(i), policy, rng) for i in seq]
    norm = normalize_clips([r.samples for r in chosen])
    pieces = [Waveform(x, db.sample_rate) for x in norm.clips]
    wav = concatenate(pieces).to_pcm()
    provenance = [(r.meta_id, r.utt_id, r.ordinal) for r in chosen]
    return SynthResult(wav, provenance, norm.clamp_events)
