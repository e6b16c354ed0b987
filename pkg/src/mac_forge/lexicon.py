"""Meta-audio sets, pronunciation lexica and label merge rules.

The three text formats handled here together define the mapping from a
transcript to the meta-audio sequence that pronounces it:

* meta-audio set: one label per line, ``#`` comments, ids in file order;
* merge rules: ``alias<TAB>canonical`` lines, applied before id lookup so
  that e.g. tonal variants can share one unit;
* lexicon: optional ``#tokenize=char|space`` header, then
  ``grapheme<TAB>label label ...`` lines.  A grapheme may repeat to list
  alternative pronunciations; the first one listed is used for mapping.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import EmptySequenceError, OOVError, ParseError

TOKENIZE_CHAR = "char"
TOKENIZE_SPACE = "space"
_TOKENIZE_HEADER = "#tokenize="


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _lines(text: str):
    # Accept a trailing "\r" so files edited on Windows still parse.
    for number, raw in enumerate(text.split("\n"), start=1):
        yield number, raw.rstrip("\r")


@dataclass(frozen=True)
class MetaAudioSet:
    """Ordered alphabet of meta-audio labels."""

    labels: tuple[str, ...]
    index: Mapping[str, int] = field(compare=False, repr=False)
    # SHA-256 of the document the set was parsed from (canonical text otherwise).
    digest: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        if not self.digest:
            object.__setattr__(self, "digest", _sha256_text(self.to_text()))

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "MetaAudioSet":
        labels = tuple(labels)
        index = {}
        for i, label in enumerate(labels):
            if not label or any(ch.isspace() for ch in label):
                raise ParseError(f"invalid label {label!r}")
            if label in index:
                raise ParseError(f"duplicate label {label!r}")
            index[label] = i
        if not labels:
            raise ParseError("empty meta-audio set")
        return cls(labels, index)

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.index

    def id_of(self, label: str) -> int:
        return self.index[label]

    def to_text(self) -> str:
        return "".join(label + "\n" for label in self.labels)

    def sha256(self) -> str:
        return self.digest


def parse_meta_audio_set(text: str, source: str | None = None) -> MetaAudioSet:
    labels: list[str] = []
    seen: dict[str, int] = {}
    for number, line in _lines(text):
        label = line.strip()
        if not label or label.startswith("#"):
            continue
        if any(ch.isspace() for ch in label):
            raise ParseError(f"label {label!r} contains whitespace", number, source)
        if label in seen:
            raise ParseError(
                f"duplicate label {label!r} (first seen at line {seen[label]})", number, source
            )
        seen[label] = number
        labels.append(label)
    if not labels:
        raise ParseError("empty meta-audio set", source=source)
    return MetaAudioSet(
        tuple(labels), {label: i for i, label in enumerate(labels)}, _sha256_text(text)
    )


@dataclass(frozen=True)
class MergeRules:
    """Alias -> canonical label map.  Chains are rejected at parse time."""

    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for alias, target in self.aliases.items():
            if target in self.aliases:
                raise ParseError(f"alias chain {alias!r} -> {target!r} -> {self.aliases[target]!r}")

    def apply(self, label: str) -> str:
        return self.aliases.get(label, label)

    def validate(self, meta_set: MetaAudioSet) -> None:
        for alias, target in self.aliases.items():
            if target not in meta_set:
                raise ParseError(f"merge target {target!r} of alias {alias!r} is not a meta-audio label")

    def to_text(self) -> str:
        return "".join(f"{a}\t{c}\n" for a, c in self.aliases.items())


def parse_merge_rules(text: str, source: str | None = None) -> MergeRules:
    aliases: dict[str, str] = {}
    lines: dict[str, int] = {}
    for number, line in _lines(text):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise ParseError("expected 'alias<TAB>canonical'", number, source)
        alias, target = parts[0].strip(), parts[1].strip()
        if alias in aliases and aliases[alias] != target:
            raise ParseError(f"alias {alias!r} already maps to {aliases[alias]!r}", number, source)
        aliases[alias] = target
        lines[alias] = number
    for alias, target in aliases.items():
        if target in aliases:
            raise ParseError(f"alias chain {alias!r} -> {target!r}", lines[alias], source)
    return MergeRules(aliases)


@dataclass(frozen=True)
class MetaSequence:
    """Non-empty sequence of meta-audio ids."""

    ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if not self.ids:
            raise EmptySequenceError("meta-audio sequence must not be empty")
        if min(self.ids) < 0:
            raise ValueError("meta-audio ids must be non-negative")

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __getitem__(self, i):
        return self.ids[i]


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, tuple[tuple[int, ...], ...]]
    meta_set: MetaAudioSet = field(repr=False)
    tokenize: str = TOKENIZE_CHAR

    def __contains__(self, grapheme):
        return grapheme in self.entries

    def __len__(self):
        return len(self.entries)

    def pronunciations(self, grapheme: str) -> tuple[tuple[int, ...], ...]:
        return self.entries[grapheme]

    def graphemes(self, text: str) -> list[str]:
        """Split ``text`` into lexicon units.

        Whitespace is a separator in both modes; it is never a grapheme.
        """
        if self.tokenize == TOKENIZE_SPACE:
            return text.split()
        return [ch for ch in text if not ch.isspace()]

    def to_text(self) -> str:
        out = [f"{_TOKENIZE_HEADER}{self.tokenize}\n"]
        labels = self.meta_set.labels
        for grapheme, prons in self.entries.items():
            for pron in prons:
                out.append(grapheme + "\t" + " ".join(labels[i] for i in pron) + "\n")
        return "".join(out)


def parse_lexicon(
    text: str,
    meta_set: MetaAudioSet,
    rules: MergeRules | None = None,
    source: str | None = None,
) -> Lexicon:
    rules = rules if rules is not None else MergeRules()
    rules.validate(meta_set)
    tokenize = TOKENIZE_CHAR
    entries: dict[str, list[tuple[int, ...]]] = {}
    for number, line in _lines(text):
        if number == 1 and line.startswith(_TOKENIZE_HEADER):
            tokenize = line[len(_TOKENIZE_HEADER):].strip()
            if tokenize not in (TOKENIZE_CHAR, TOKENIZE_SPACE):
                raise ParseError(f"unknown tokenization {tokenize!r}", number, source)
            continue
        # "#" alone is a valid grapheme, so only tab-free "#" lines are comments.
        if not line.strip() or (line.startswith("#") and "\t" not in line):
            continue
        grapheme, tab, pron = line.partition("\t")
        if not tab:
            raise ParseError("expected 'grapheme<TAB>labels'", number, source)
        if not grapheme or any(ch.isspace() for ch in grapheme):
            raise ParseError(f"invalid grapheme {grapheme!r}", number, source)
        labels = pron.split()
        if not labels:
            raise ParseError(f"empty pronunciation for {grapheme!r}", number, source)
        ids = []
        for raw in labels:
            label = rules.apply(raw)
            if label not in meta_set:
                raise ParseError(f"unknown label {raw!r}", number, source)
            ids.append(meta_set.id_of(label))
        entries.setdefault(grapheme, []).append(tuple(ids))
    if tokenize == TOKENIZE_CHAR:
        for grapheme in entries:
            if len(grapheme) != 1:
                raise ParseError(f"grapheme {grapheme!r} is not a single character under tokenize=char",
                                 source=source)
    return Lexicon({g: tuple(p) for g, p in entries.items()}, meta_set, tokenize)


def map_transcript(
    lexicon: Lexicon, text: str, oov_policy: str = "error"
) -> tuple[MetaSequence, Counter]:
    """Map ``text`` to the concatenation of each grapheme's first pronunciation.

    Returns the sequence and a Counter of skipped OOV graphemes (always
    empty under ``oov_policy="error"``).  Positions in :class:`OOVError`
    are 1-based grapheme positions.
    """
    if oov_policy not in ("error", "skip"):
        raise ValueError(f"oov_policy must be 'error' or 'skip', got {oov_policy!r}")
    ids: list[int] = []
    oov: Counter = Counter()
    for position, grapheme in enumerate(lexicon.graphemes(text), start=1):
        prons = lexicon.entries.get(grapheme)
        if prons is None:
            if oov_policy == "error":
                raise OOVError(grapheme, position)
            oov[grapheme] += 1
            continue
        ids.extend(prons[0])
    if not ids:
        raise EmptySequenceError(f"transcript {text!r} maps to an empty meta-audio sequence")
    return MetaSequence(tuple(ids)), oov


@dataclass
class CoverageReport:
    oov: dict[str, int]
    total: int
    mappable: int

    @property
    def mappable_fraction(self) -> float:
        return 1.0 if self.total == 0 else self.mappable / self.total


def coverage_report(lexicon: Lexicon, texts: Sequence[str]) -> CoverageReport:
    oov: Counter = Counter()
    total = 0
    for text in texts:
        for grapheme in lexicon.graphemes(text):
            total += 1
            if grapheme not in lexicon.entries:
                oov[grapheme] += 1
    return CoverageReport(dict(oov), total, total - sum(oov.values()))


def label_string(meta_set: MetaAudioSet, seq: Iterable[int]) -> str:
    return " ".join(meta_set.labels[i] for i in seq)
