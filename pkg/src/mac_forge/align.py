"""Monotone segmentation of an utterance against a meta-audio sequence.

A segmentation splits frames ``0..T-1`` into ``n`` consecutive segments, one
per label of the sequence, each at least ``min_seg_frames`` long.  A segment's
probability is the product of its frames' posteriors for that label, so

* :func:`forward_logprob` sums over every segmentation (the marginal),
* :func:`viterbi_segment` finds the single best one (a lower bound on the
  marginal), and
* :func:`brute_force_logprob` enumerates them explicitly, as an oracle.

Both DPs run over an expanded state chain: label ``i`` owns states
``i*m .. i*m+m-1`` (``m = min_seg_frames``), every state is entered from the
state before it, and only the last state of each label has a self-loop.
Frame scores are accumulated strictly left to right, so a Viterbi score is
bit-identical to re-summing its path's frame log-posteriors in order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .emissions import EmissionMatrix
from .errors import (
    GuardExceededError,
    ImpossibleAlignmentError,
    InfeasibleAlignmentError,
    LabelRangeError,
)

BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class Segmentation:
    labels: tuple[int, ...]
    boundaries: tuple[int, ...]
    segment_scores: tuple[float, ...]

    def __post_init__(self):
        b = self.boundaries
        if len(b) != len(self.labels) + 1 or b[0] != 0:
            raise ValueError("boundaries must be (0, s_2, ..., T) with one segment per label")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError(f"boundaries must be strictly increasing: {b}")

    @property
    def num_frames(self) -> int:
        return self.boundaries[-1]

    def segments(self):
        """Yield ``(label, start_frame, end_frame)`` triples."""
        for i, label in enumerate(self.labels):
            yield label, self.boundaries[i], self.boundaries[i + 1]


@dataclass(frozen=True)
class AlignmentScore:
    log_marginal: float
    log_viterbi: float


def count_segmentations(num_frames: int, n: int, min_seg_frames: int = 1) -> int:
    slack = num_frames - n * min_seg_frames
    if slack < 0:
        return 0
    return math.comb(slack + n - 1, n - 1)


def _check(em: EmissionMatrix, seq: Sequence[int], min_seg_frames: int) -> np.ndarray:
    ids = np.asarray(tuple(seq), dtype=np.int64)
    if ids.size == 0:
        raise ValueError("meta-audio sequence must not be empty")
    if min_seg_frames < 1:
        raise ValueError("min_seg_frames must be >= 1")
    if ids.min() < 0 or ids.max() >= em.num_labels:
        raise LabelRangeError(f"meta-audio id out of range 0..{em.num_labels - 1}: {ids.tolist()}")
    need = ids.size * min_seg_frames
    if em.num_frames < need:
        raise InfeasibleAlignmentError(
            f"{em.num_frames} frames cannot hold {ids.size} segments of >= {min_seg_frames} frames"
        )
    return ids


def _state_emissions(em: EmissionMatrix, ids: np.ndarray, m: int) -> np.ndarray:
    # T x (n*m): each label's column repeated for its m chain states.
    return em.logp[:, np.repeat(ids, m)]


def forward_logprob(em: EmissionMatrix, seq: Sequence[int], min_seg_frames: int = 1) -> float:
    """Log of the summed probability of every feasible segmentation.

    Returns ``-inf`` when every segmentation has zero probability.
    """
    ids = _check(em, seq, min_seg_frames)
    m = min_seg_frames
    emit = _state_emissions(em, ids, m)
    n_states = emit.shape[1]
    loop = (np.arange(n_states) % m) == m - 1

    alpha = np.full(n_states, -np.inf)
    alpha[0] = emit[0, 0]
    enter = np.empty(n_states)
    stay = np.empty(n_states)
    for t in range(1, emit.shape[0]):
        enter[0] = -np.inf
        enter[1:] = alpha[:-1]
        stay[:] = -np.inf
        stay[loop] = alpha[loop]
        alpha = np.logaddexp(enter, stay) + emit[t]
    return float(alpha[-1])


def viterbi_segment(
    em: EmissionMatrix, seq: Sequence[int], min_seg_frames: int = 1
) -> tuple[Segmentation, float]:
    """Best segmentation and its log-score.

    Ties prefer the later boundary: when entering a label and staying in it
    score equally, the entry is taken, so earlier segments are as long as
    possible.
    """
    ids = _check(em, seq, min_seg_frames)
    m = min_seg_frames
    emit = _state_emissions(em, ids, m)
    n_frames, n_states = emit.shape
    loop = (np.arange(n_states) % m) == m - 1

    from_stay = np.zeros((n_frames, n_states), dtype=bool)
    delta = np.full(n_states, -np.inf)
    delta[0] = emit[0, 0]
    enter = np.empty(n_states)
    stay = np.empty(n_states)
    for t in range(1, n_frames):
        enter[0] = -np.inf
        enter[1:] = delta[:-1]
        stay[:] = -np.inf
        stay[loop] = delta[loop]
        took_stay = stay > enter
        from_stay[t] = took_stay
        delta = np.where(took_stay, stay, enter) + emit[t]

    score = float(delta[-1])
    if score == -math.inf:
        raise ImpossibleAlignmentError("every feasible segmentation has zero probability")

    state_at = np.empty(n_frames, dtype=np.int64)
    s = n_states - 1
    for t in range(n_frames - 1, 0, -1):
        state_at[t] = s
        if not from_stay[t, s]:
            s -= 1
    state_at[0] = s
    assert s == 0, "backtrace did not reach the initial state"

    label_pos = state_at // m
    cuts = np.flatnonzero(np.diff(label_pos)) + 1
    boundaries = (0, *(int(c) for c in cuts), n_frames)
    frame_scores = emit[np.arange(n_frames), state_at]
    segment_scores = tuple(
        float(sum(frame_scores[boundaries[i]:boundaries[i + 1]].tolist()))
        for i in range(len(ids))
    )
    seg = Segmentation(tuple(int(i) for i in ids), boundaries, segment_scores)
    return seg, score


def align(em: EmissionMatrix, seq: Sequence[int], min_seg_frames: int = 1) -> tuple[Segmentation, AlignmentScore]:
    seg, best = viterbi_segment(em, seq, min_seg_frames)
    return seg, AlignmentScore(forward_logprob(em, seq, min_seg_frames), best)


def _logsumexp(values: list[float]) -> float:
    top = max(values)
    if top == -math.inf:
        return -math.inf
    return top + math.log(math.fsum(math.exp(v - top) for v in values))


def brute_force_logprob(
    em: EmissionMatrix,
    seq: Sequence[int],
    min_seg_frames: int = 1,
    limit: int = BRUTE_FORCE_LIMIT,
) -> float:
    """Marginal log-probability by enumerating every segmentation.

    Intended as an oracle for tiny instances; refuses (``GuardExceededError``)
    when more than ``limit`` segmentations exist.
    """
    ids = _check(em, seq, min_seg_frames)
    n, m, n_frames = len(ids), min_seg_frames, em.num_frames
    count = count_segmentations(n_frames, n, m)
    if count > limit:
        raise GuardExceededError(count, limit)
    columns = [em.logp[:, k].tolist() for k in ids]
    slack = n_frames - n * m
    path_scores = []
    # Stars and bars: choose where the n-1 bars fall among slack stars.
    for bars in combinations(range(slack + n - 1), n - 1):
        extra, prev = [], -1
        for b in bars:
            extra.append(b - prev - 1)
            prev = b
        extra.append(slack + n - 2 - prev)
        total, start = 0.0, 0
        for i in range(n):
            end = start + m + extra[i]
            total += math.fsum(columns[i][start:end])
            start = end
        path_scores.append(total)
    return _logsumexp(path_scores)


def segmentation_to_samples(
    seg: Segmentation, frame_hop: int, num_samples: int | None = None
) -> list[tuple[int, int]]:
    """Sample ranges ``[start, end)`` for each segment.

    Ends are clamped to ``num_samples``; a range that clamps to zero length
    comes back with ``end == start`` and callers are expected to drop it.
    """
    ranges = []
    for _, s, e in seg.segments():
        start, end = s * frame_hop, e * frame_hop
        if num_samples is not None:
            start = min(start, num_samples)
            end = min(end, num_samples)
        ranges.append((start, end))
    return ranges
