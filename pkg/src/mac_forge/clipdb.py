"""On-disk database of aligned meta-audio clips.

Every clip produced by forced alignment is kept, so one meta-audio id can
have many realizations from different utterances (or several from the same
one).  Records for an id keep their insertion order; ``ordinal`` is the
position of a record within its id's list.

Directory layout::

    meta.hash     hex SHA-256 of the meta-audio set file
    db.meta       key=value lines: version, sample_rate, num_labels, meta_hash
    index.tsv     meta_id, utt_id, start, end, log_score, energy, clipfile
    clips/        <meta_id>_<ordinal>.wav, mono 16-bit PCM
"""

from __future__ import annotations

import logging
import math
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .align import segmentation_to_samples, viterbi_segment
from .emissions import EmissionMatrix
from .errors import (
    FormatError,
    HashMismatchError,
    IndexCorruptError,
    LabelRangeError,
    MacForgeError,
    MissingIndexError,
    SampleRateMismatchError,
    UnsupportedVersionError,
)
from .lexicon import MetaSequence
from .wav import Waveform, read_wav, to_bytes as wav_bytes

log = logging.getLogger(__name__)

DB_VERSION = 1
INDEX_COLUMNS = ("meta_id", "utt_id", "start", "end", "log_score", "energy", "clipfile")
MIN_CLIP_SAMPLES = 80


@dataclass(eq=False)
class ClipRecord:
    meta_id: int
    utt_id: str
    start: int
    end: int
    samples: np.ndarray
    log_score: float
    sample_rate: int
    ordinal: int = -1
    energy: float = field(default=math.nan)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int16)
        if self.end <= self.start:
            raise ValueError(f"empty sample range [{self.start}, {self.end})")
        if math.isnan(self.energy):
            self.energy = float(np.linalg.norm(self.samples.astype(np.float64)))

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ClipRecord):
            return NotImplemented
        return (
            (self.meta_id, self.utt_id, self.start, self.end, self.ordinal, self.sample_rate)
            == (other.meta_id, other.utt_id, other.start, other.end, other.ordinal, other.sample_rate)
            and _same_float(self.log_score, other.log_score)
            and _same_float(self.energy, other.energy)
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def clipfile(self) -> str:
        return f"clips/{self.meta_id}_{self.ordinal}.wav"


def _same_float(a: float, b: float) -> bool:
    return a == b or (math.isnan(a) and math.isnan(b))


class ClipDatabase:
    """Index from meta-audio id to every clip aligned to it.

    Mutation goes through :meth:`add` only, from a single writer.
    """

    def __init__(self, meta_hash: str, num_labels: int, sample_rate: int):
        if num_labels < 1 or sample_rate <= 0:
            raise ValueError("num_labels and sample_rate must be positive")
        self.meta_hash = meta_hash.lower()
        self.num_labels = num_labels
        self.sample_rate = sample_rate
        self._index: list[list[ClipRecord]] = [[] for _ in range(num_labels)]

    def add(self, record: ClipRecord) -> ClipRecord:
        self._check_id(record.meta_id)
        if record.sample_rate != self.sample_rate:
            raise SampleRateMismatchError(
                f"clip at {record.sample_rate} Hz added to a {self.sample_rate} Hz database"
            )
        bucket = self._index[record.meta_id]
        record.ordinal = len(bucket)
        bucket.append(record)
        return record

    def _check_id(self, meta_id: int):
        if not 0 <= meta_id < self.num_labels:
            raise LabelRangeError(f"meta-audio id {meta_id} outside 0..{self.num_labels - 1}")

    def query(self, meta_id: int) -> list[ClipRecord]:
        self._check_id(meta_id)
        return list(self._index[meta_id])

    def counts(self) -> list[int]:
        return [len(b) for b in self._index]

    def records(self) -> Iterable[ClipRecord]:
        for bucket in self._index:
            yield from bucket

    def __len__(self):
        return sum(self.counts())

    def __eq__(self, other):
        if not isinstance(other, ClipDatabase):
            return NotImplemented
        return (
            self.meta_hash == other.meta_hash
            and self.num_labels == other.num_labels
            and self.sample_rate == other.sample_rate
            and self._index == other._index
        )


@dataclass
class Utterance:
    utt_id: str
    waveform: Waveform
    sequence: MetaSequence
    emissions: EmissionMatrix


@dataclass
class BuildReport:
    skipped: list[tuple[str, str]] = field(default_factory=list)
    clips_extracted: int = 0
    clips_dropped: list[tuple[str, int, str]] = field(default_factory=list)
    utterances_aligned: int = 0

    @property
    def clips_stored(self) -> int:
        return self.clips_extracted - len(self.clips_dropped)


def _align_one(utt: Utterance, min_seg_frames: int):
    try:
        seg, _ = viterbi_segment(utt.emissions, utt.sequence, min_seg_frames)
    except MacForgeError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return seg, None


def build_database(
    corpus: Sequence[Utterance],
    meta_hash: str,
    num_labels: int,
    sample_rate: int | None = None,
    min_seg_frames: int = 1,
    min_clip_samples: int = MIN_CLIP_SAMPLES,
    min_log_score: float = -math.inf,
    workers: int = 1,
) -> tuple[ClipDatabase, BuildReport]:
    """Align every utterance and store all resulting clips.

    Utterances that cannot be aligned are skipped and listed in the report.
    Sample-rate and meta-set hash mismatches are fatal.
    """
    rates = {u.waveform.sample_rate for u in corpus}
    if sample_rate is None:
        if len(rates) > 1:
            raise SampleRateMismatchError(f"corpus mixes sample rates {sorted(rates)}")
        sample_rate = rates.pop() if rates else 16000
    for u in corpus:
        if u.waveform.sample_rate != sample_rate or u.emissions.sample_rate != sample_rate:
            raise SampleRateMismatchError(
                f"utterance {u.utt_id!r}: waveform {u.waveform.sample_rate} Hz, emissions "
                f"{u.emissions.sample_rate} Hz, database {sample_rate} Hz"
            )
        if u.emissions.meta_hash is not None and u.emissions.meta_hash != meta_hash.lower():
            raise HashMismatchError(f"utterance {u.utt_id!r}: emissions made for another meta-audio set")

    if workers > 1 and len(corpus) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda u: _align_one(u, min_seg_frames), corpus))
    else:
        results = [_align_one(u, min_seg_frames) for u in corpus]

    db = ClipDatabase(meta_hash, num_labels, sample_rate)
    report = BuildReport()
    for utt, (seg, error) in zip(corpus, results):
        if seg is None:
            log.info("skipping %s: %s", utt.utt_id, error)
            report.skipped.append((utt.utt_id, error))
            continue
        report.utterances_aligned += 1
        samples = np.asarray(utt.waveform.to_pcm().samples)
        ranges = segmentation_to_samples(seg, utt.emissions.frame_hop, samples.shape[0])
        for (label, _, _), (start, end), score in zip(seg.segments(), ranges, seg.segment_scores):
            report.clips_extracted += 1
            if end - start <= 0:
                report.clips_dropped.append((utt.utt_id, label, "empty after clamping"))
            elif end - start < min_clip_samples:
                report.clips_dropped.append((utt.utt_id, label, f"shorter than {min_clip_samples} samples"))
            elif score < min_log_score:
                report.clips_dropped.append((utt.utt_id, label, f"log-score {score:.3f} below floor"))
            else:
                db.add(ClipRecord(label, utt.utt_id, start, end, samples[start:end].copy(), score, sample_rate))
    return db, report


def _format_float(x: float) -> str:
    return repr(float(x))


def persist(db: ClipDatabase, directory, overwrite: bool = False) -> None:
    """Write ``db`` under ``directory``.

    The tree is assembled in a sibling temp directory and renamed into place,
    so an interrupted write never leaves a partial database behind.
    """
    directory = os.path.abspath(os.fspath(directory))
    if os.path.exists(directory) and os.listdir(directory) and not overwrite:
        raise FileExistsError(f"{directory} exists and is not empty")
    parent = os.path.dirname(directory)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".clipdb-", dir=parent)
    try:
        os.mkdir(os.path.join(tmp, "clips"))
        lines = []
        for r in db.records():
            with open(os.path.join(tmp, r.clipfile), "wb") as f:
                f.write(wav_bytes(Waveform(r.samples, r.sample_rate)))
            lines.append("\t".join([
                str(r.meta_id), r.utt_id, str(r.start), str(r.end),
                _format_float(r.log_score), _format_float(r.energy), r.clipfile,
            ]))
        with open(os.path.join(tmp, "index.tsv"), "w", encoding="utf-8", newline="\n") as f:
            f.write("".join(line + "\n" for line in lines))
        with open(os.path.join(tmp, "meta.hash"), "w", encoding="utf-8", newline="\n") as f:
            f.write(db.meta_hash + "\n")
        with open(os.path.join(tmp, "db.meta"), "w", encoding="utf-8", newline="\n") as f:
            f.write(
                f"version={DB_VERSION}\nsample_rate={db.sample_rate}\n"
                f"num_labels={db.num_labels}\nmeta_hash={db.meta_hash}\n"
            )
        if os.path.exists(directory):
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _read_db_meta(path) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise FormatError(f"db.meta line {number}: expected key=value")
            meta[key.strip()] = value.strip()
    return meta


def load(directory, expected_hash: str | None = None) -> ClipDatabase:
    directory = os.fspath(directory)
    index_path = os.path.join(directory, "index.tsv")
    if not os.path.isfile(index_path):
        raise MissingIndexError(f"{directory}: missing index.tsv")
    for name in ("meta.hash", "db.meta"):
        if not os.path.isfile(os.path.join(directory, name)):
            raise MissingIndexError(f"{directory}: missing {name}")

    meta = _read_db_meta(os.path.join(directory, "db.meta"))
    try:
        version = int(meta["version"])
        sample_rate = int(meta["sample_rate"])
        num_labels = int(meta["num_labels"])
        recorded_hash = meta["meta_hash"].lower()
    except (KeyError, ValueError) as exc:
        raise FormatError(f"db.meta is incomplete or malformed: {exc}") from exc
    if version != DB_VERSION:
        raise UnsupportedVersionError(f"database version {version}, expected {DB_VERSION}")
    with open(os.path.join(directory, "meta.hash"), encoding="utf-8") as f:
        meta_hash = f.read().strip().lower()
    if meta_hash != recorded_hash:
        raise HashMismatchError("meta.hash does not match the hash recorded in db.meta")
    if expected_hash is not None and meta_hash != expected_hash.lower():
        raise HashMismatchError("database was built for a different meta-audio set")

    db = ClipDatabase(meta_hash, num_labels, sample_rate)
    with open(index_path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                raise IndexCorruptError("blank line", number)
            db.add(_parse_index_line(line, number, directory, db))
    return db


def _parse_index_line(line: str, number: int, directory: str, db: ClipDatabase) -> ClipRecord:
    fields = line.split("\t")
    if len(fields) != len(INDEX_COLUMNS):
        raise IndexCorruptError(f"expected {len(INDEX_COLUMNS)} fields, got {len(fields)}", number)
    try:
        meta_id, start, end = int(fields[0]), int(fields[2]), int(fields[3])
        log_score, stored_energy = float(fields[4]), float(fields[5])
    except ValueError as exc:
        raise IndexCorruptError(str(exc), number) from exc
    utt_id, clipfile = fields[1], fields[6]
    if not 0 <= meta_id < db.num_labels:
        raise IndexCorruptError(f"meta_id {meta_id} outside 0..{db.num_labels - 1}", number)
    if end <= start or start < 0:
        raise IndexCorruptError(f"invalid sample range [{start}, {end})", number)
    ordinal = db.counts()[meta_id]
    if clipfile != f"clips/{meta_id}_{ordinal}.wav":
        raise IndexCorruptError(f"clip file {clipfile!r} out of order for id {meta_id}", number)
    try:
        wav = read_wav(os.path.join(directory, clipfile))
    except (OSError, FormatError) as exc:
        raise IndexCorruptError(f"cannot read {clipfile}: {exc}", number) from exc
    if wav.sample_rate != db.sample_rate:
        raise IndexCorruptError(f"{clipfile} is {wav.sample_rate} Hz, database is {db.sample_rate} Hz", number)
    if len(wav) != end - start:
        raise IndexCorruptError(f"{clipfile} has {len(wav)} samples, range says {end - start}", number)
    record = ClipRecord(meta_id, utt_id, start, end, wav.samples, log_score, db.sample_rate)
    if not math.isclose(record.energy, stored_energy, rel_tol=1e-6, abs_tol=1e-9):
        raise IndexCorruptError(f"energy {stored_energy} does not match clip ({record.energy})", number)
    record.energy = stored_energy
    return record


@dataclass
class DatabaseStats:
    counts: list[int]
    total_seconds: float
    coverage: float
    num_labels: int

    @property
    def covered(self) -> int:
        return sum(1 for c in self.counts if c > 0)


def stats(db: ClipDatabase) -> DatabaseStats:
    counts = db.counts()
    samples = sum(len(r) for r in db.records())
    covered = sum(1 for c in counts if c > 0)
    return DatabaseStats(counts, samples / db.sample_rate, covered / db.num_labels, db.num_labels)
