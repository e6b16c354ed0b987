"""Two-stage sampling: a transcript from the text distribution, then audio for it.

Randomness is split into independent streams derived from one 64-bit master
seed: one stream draws transcripts in order, and each output slot gets its
own stream for clip selection.  Synthesis can therefore run in any order (or
in parallel) and still reproduce the same corpus byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CoverageError, EmptyDistributionError, EmptySequenceError, OOVError
from .lexicon import Lexicon, map_transcript
from .manifest import ManifestRecord, write_manifest
from .synth import synthesize_utterance
from .util import atomic_write_text
from .wav import write_wav

log = logging.getLogger(__name__)

TEXT_STREAM = 0
UTTERANCE_STREAM = 1
RETRY_CAP = 10
POLICIES = ("uniform", "best", "weighted")


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by ``key`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


def fresh_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class EmpiricalTextDist:
    texts: tuple[str, ...]
    counts: tuple[int, ...]
    excluded: frozenset = frozenset()

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def probabilities(self) -> np.ndarray:
        counts = np.asarray(self.counts, dtype=np.float64)
        return counts / counts.sum()

    def probability(self, text: str) -> float:
        text = text.strip()
        try:
            return self.counts[self.texts.index(text)] / self.total
        except ValueError:
            return 0.0


def build_text_distribution(texts: Sequence[str], exclusions: Sequence[str] = ()) -> EmpiricalTextDist:
    """Sample-frequency distribution over stripped, non-blank transcripts.

    A transcript equal to any exclusion (after stripping) gets zero mass.
    """
    excluded = frozenset(e.strip() for e in exclusions if e.strip())
    counts: Counter = Counter()
    for t in texts:
        t = t.strip()
        if t and t not in excluded:
            counts[t] += 1
    if not counts:
        raise EmptyDistributionError("no transcripts left after exclusion")
    # Counter preserves first-appearance order.
    return EmpiricalTextDist(tuple(counts), tuple(counts.values()), excluded)


def sample_transcript(dist: EmpiricalTextDist, rng: np.random.Generator) -> str:
    # Integer draw against cumulative counts: exact, no float round-off.
    cumulative = np.cumsum(dist.counts)
    r = rng.integers(cumulative[-1])
    return dist.texts[int(np.searchsorted(cumulative, r, side="right"))]


@dataclass(frozen=True)
class SelectionPolicy:
    kind: str = "uniform"
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"selection policy must be one of {POLICIES}, got {self.kind!r}")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError("temperature must be finite and positive")


def select_clip(candidates: Sequence, policy: SelectionPolicy, rng: np.random.Generator):
    """Pick one clip record.

    ``uniform`` draws with equal probability, ``best`` takes the highest
    log-score (lowest ordinal on ties), ``weighted`` draws proportional to
    ``exp(log_score / temperature)``.
    """
    if not candidates:
        raise ValueError("no candidates to select from")
    if len(candidates) == 1:
        return candidates[0]
    if policy.kind == "uniform":
        return candidates[int(rng.integers(len(candidates)))]
    scores = np.array([c.log_score for c in candidates], dtype=np.float64)
    if policy.kind == "best":
        return candidates[int(np.argmax(scores))]
    if np.isneginf(scores).all():
        return candidates[int(rng.integers(len(candidates)))]
    weights = np.exp((scores - scores.max()) / policy.temperature)
    cumulative = np.cumsum(weights)
    u = rng.random() * cumulative[-1]
    return candidates[min(int(np.searchsorted(cumulative, u, side="right")), len(candidates) - 1)]


def provenance_digest(meta_ids: Sequence[int], clips: Sequence[tuple[int, str, int]]) -> str:
    payload = json.dumps(
        {"meta_ids": list(meta_ids), "clips": [list(c) for c in clips]},
        sort_keys=True, separators=(",", ":"), ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class SlotFailure:
    slot: int
    attempts: int
    reasons: list[str]


@dataclass
class CorpusResult:
    seed: int
    records: list[ManifestRecord] = field(default_factory=list)
    provenance: list[dict] = field(default_factory=list)
    failures: list[SlotFailure] = field(default_factory=list)
    clamp_events: int = 0
    total_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures


def _plan(db, lexicon, dist, count, seed, retry_cap, each_once, oov_policy):
    """Draw transcripts slot by slot; returns ``(plans, failures)``."""
    rng = derive_rng(seed, TEXT_STREAM)
    plans, failures = [], []
    slots = range(len(dist.texts)) if each_once else range(count)
    for slot in slots:
        reasons = []
        attempts = 1 if each_once else retry_cap
        for _ in range(attempts):
            text = dist.texts[slot] if each_once else sample_transcript(dist, rng)
            try:
                seq, _ = map_transcript(lexicon, text, oov_policy)
                missing = [i for i in seq if i >= db.num_labels or not db.query(i)]
                if missing:
                    raise CoverageError(missing)
            except (OOVError, EmptySequenceError, CoverageError) as exc:
                reasons.append(f"{text!r}: {exc}")
                continue
            plans.append((slot, text, seq))
            break
        else:
            failures.append(SlotFailure(slot, len(reasons), reasons))
    return plans, failures


def generate_corpus(
    db,
    lexicon: Lexicon,
    dist: EmpiricalTextDist,
    count: int,
    policy: SelectionPolicy,
    seed: int,
    out_dir,
    *,
    each_once: bool = False,
    retry_cap: int = RETRY_CAP,
    oov_policy: str = "error",
    workers: int = 1,
) -> CorpusResult:
    """Synthesize ``count`` utterances into ``out_dir``.

    Writes ``audio/mac-NNNNNN.wav``, ``manifest.jsonl`` and
    ``provenance.jsonl`` (the full clip list behind each manifest digest).
    Slots whose transcript cannot be covered after ``retry_cap`` draws are
    reported in ``failures`` and left out; everything else is still written.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    out_dir = os.fspath(out_dir)
    audio_dir = os.path.join(out_dir, "audio")
    os.makedirs(audio_dir, exist_ok=True)
    result = CorpusResult(seed)
    plans, result.failures = _plan(db, lexicon, dist, count, seed, retry_cap, each_once, oov_policy)

    def run(plan):
        slot, _, seq = plan
        return synthesize_utterance(db, seq, policy, derive_rng(seed, UTTERANCE_STREAM, slot))

    if workers > 1 and len(plans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run, plans))
    else:
        outputs = [run(p) for p in plans]

    prov_lines = []
    for (slot, text, seq), synth in zip(plans, outputs):
        uid = f"mac-{slot:06d}"
        rel = f"audio/{uid}.wav"
        write_wav(os.path.join(out_dir, rel), synth.waveform)
        digest = provenance_digest(seq.ids, synth.provenance)
        result.records.append(ManifestRecord(uid, rel, text, "mac", digest))
        entry = {
            "id": uid,
            "text": text,
            "meta_ids": list(seq.ids),
            "clips": [list(c) for c in synth.provenance],
            "num_samples": len(synth.waveform),
            "digest": digest,
        }
        result.provenance.append(entry)
        prov_lines.append(json.dumps(entry, ensure_ascii=False) + "\n")
        result.clamp_events += synth.clamp_events
        result.total_seconds += synth.waveform.duration

    write_manifest(os.path.join(out_dir, "manifest.jsonl"), result.records)
    atomic_write_text(os.path.join(out_dir, "provenance.jsonl"), "".join(prov_lines))
    for failure in result.failures:
        log.warning("slot %d failed after %d attempt(s)", failure.slot, failure.attempts)
    return result


def audit_corpus(out_dir, lexicon: Lexicon, db, oov_policy: str = "error") -> list[str]:
    """Check a generated corpus against its provenance; returns problems found.

    For each manifest entry: the provenance digest must match the recorded
    clip list, re-mapping the transcript must give the recorded meta-audio
    sequence, and the audio length must equal the sum of the clip lengths.
    """
    from .manifest import read_manifest
    from .wav import wav_info

    out_dir = os.fspath(out_dir)
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    records = read_manifest(manifest_path)
    with open(os.path.join(out_dir, "provenance.jsonl"), encoding="utf-8") as f:
        prov = {e["id"]: e for e in map(json.loads, filter(str.strip, f))}
    problems = []
    for r in records:
        entry = prov.get(r.id)
        if entry is None:
            problems.append(f"{r.id}: no provenance entry")
            continue
        clips = [tuple(c) for c in entry["clips"]]
        if provenance_digest(entry["meta_ids"], clips) != r.provenance:
            problems.append(f"{r.id}: provenance digest mismatch")
        seq, _ = map_transcript(lexicon, r.text, oov_policy)
        if list(seq.ids) != entry["meta_ids"]:
            problems.append(f"{r.id}: transcript maps to {list(seq.ids)}, recorded {entry['meta_ids']}")
        if [c[0] for c in clips] != entry["meta_ids"]:
            problems.append(f"{r.id}: clip ids do not follow the meta-audio sequence")
        path = r.resolve(manifest_path)
        if not os.path.isfile(path):
            problems.append(f"{r.id}: missing audio {r.audio}")
            continue
        expected = sum(len(db.query(m)[o]) for m, _, o in clips)
        actual, _ = wav_info(path)
        if actual != expected:
            problems.append(f"{r.id}: {actual} samples, clips sum to {expected}")
    return problems
