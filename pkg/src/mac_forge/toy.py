"""A tiny deterministic corpus for demos and end-to-end tests.

Eight short utterances over a seven-unit meta-audio set.  Every unit is
rendered as a tone of its own pitch, and the emission matrices are built
from the known segmentation (0.97 on the true label), so forced alignment
recovers the segments and every unit ends up in the database.

    python -m mac_forge.toy OUT_DIR
"""

from __future__ import annotations

import os
import sys

import numpy as np

from .emissions import EmissionMatrix, write_mace
from .lexicon import map_transcript, parse_lexicon, parse_merge_rules, parse_meta_audio_set
from .manifest import ManifestRecord, write_manifest
from .util import atomic_write_text
from .wav import Waveform, write_wav

SAMPLE_RATE = 16000
FRAME_HOP = 160
SEED = 20221004

META_SET = """\
# toy meta-audio set: a few English phones plus one toneless Cantonese syllable
K
AE
T
D
O
G
haa
"""

MERGE_RULES = """\
haa4\thaa
haa6\thaa
AA\tAE
"""

# "a" lists a second pronunciation; only the first is used for mapping.
LEXICON = """\
#tokenize=char
c\tK
k\tK
a\tAE
a\tAA
t\tT
d\tD
o\tO
g\tG
行\thaa4
下\thaa6
"""

UTTERANCES = [
    ("utt01", "cat"),
    ("utt02", "dog"),
    ("utt03", "cog"),
    ("utt04", "tag"),
    ("utt05", "act"),
    ("utt06", "god"),
    ("utt07", "行下"),
    ("utt08", "tad"),
]

TEXTS = """\
toad
goat
dot
cod
tog
行cat
dad
cat
cat
下dog
kat
"""

EXCLUDE = """\
cat
"""

PEAK_RANGE = (3000.0, 5000.0)
SEGMENT_FRAMES = (8, 12)


def _tone(label: int, n: int, amplitude: float, rng) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    freq = 150.0 + 70.0 * label
    x = amplitude * np.sin(2 * np.pi * freq * t) + 0.5 * amplitude * np.sin(4 * np.pi * freq * t)
    x += rng.normal(0.0, 20.0, n)
    return x / 1.5


def _emissions(labels, lengths, num_labels: int) -> np.ndarray:
    frames = np.repeat(labels, lengths)
    probs = np.full((frames.size, num_labels), 0.03 / (num_labels - 1))
    probs[np.arange(frames.size), frames] = 0.97
    return np.log(probs)


def write_toy_corpus(directory) -> dict[str, str]:
    """Write the toy corpus under ``directory``; returns the file paths by role."""
    directory = os.fspath(directory)
    for sub in ("audio", "emissions"):
        os.makedirs(os.path.join(directory, sub), exist_ok=True)
    paths = {
        "meta_set": os.path.join(directory, "meta_set.txt"),
        "lexicon": os.path.join(directory, "lexicon.tsv"),
        "merge_rules": os.path.join(directory, "merge_rules.tsv"),
        "manifest": os.path.join(directory, "manifest.jsonl"),
        "emissions_dir": os.path.join(directory, "emissions"),
        "texts": os.path.join(directory, "texts.txt"),
        "exclude": os.path.join(directory, "exclude.txt"),
    }
    for key, text in (("meta_set", META_SET), ("lexicon", LEXICON),
                      ("merge_rules", MERGE_RULES), ("texts", TEXTS), ("exclude", EXCLUDE)):
        atomic_write_text(paths[key], text)

    meta_set = parse_meta_audio_set(META_SET)
    lexicon = parse_lexicon(LEXICON, meta_set, parse_merge_rules(MERGE_RULES))
    rng = np.random.default_rng(SEED)
    records = []
    for utt_id, text in UTTERANCES:
        seq, _ = map_transcript(lexicon, text)
        labels = np.array(seq.ids)
        lengths = rng.integers(SEGMENT_FRAMES[0], SEGMENT_FRAMES[1] + 1, size=labels.size)
        peak = rng.uniform(*PEAK_RANGE)
        pieces = [
            _tone(int(k), int(n) * FRAME_HOP, peak * rng.uniform(0.8, 1.2), rng)
            for k, n in zip(labels, lengths)
        ]
        wav = Waveform(np.concatenate(pieces), SAMPLE_RATE).to_pcm()
        write_wav(os.path.join(directory, "audio", f"{utt_id}.wav"), wav)
        em = EmissionMatrix(_emissions(labels, lengths, len(meta_set)), FRAME_HOP, SAMPLE_RATE)
        write_mace(os.path.join(paths["emissions_dir"], f"{utt_id}.mace"), em, meta_set.sha256())
        records.append(ManifestRecord(utt_id, f"audio/{utt_id}.wav", text, "real"))
    write_manifest(paths["manifest"], records)
    return paths


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m mac_forge.toy OUT_DIR", file=sys.stderr)
        return 1
    for role, path in write_toy_corpus(argv[0]).items():
        print(f"{role}\t{path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
