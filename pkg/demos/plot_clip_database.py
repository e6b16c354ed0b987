"""
Building a clip database from the toy corpus
============================================

The toy corpus is eight short tone recordings with synthetic emissions.
Aligning each one cuts it into per-label clips.
"""

import tempfile

from mac_forge import clipdb
from mac_forge.clipdb import Utterance, build_database
from mac_forge.emissions import read_mace
from mac_forge.lexicon import coverage_report, map_transcript, parse_lexicon, parse_merge_rules, parse_meta_audio_set
from mac_forge.manifest import read_manifest
from mac_forge.toy import write_toy_corpus
from mac_forge.wav import read_wav

work = tempfile.mkdtemp()
paths = write_toy_corpus(work)

############################################################
# Load the label inventory, merge rules and lexicon


def read(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


meta_set = parse_meta_audio_set(read(paths["meta_set"]))
lexicon = parse_lexicon(read(paths["lexicon"]), meta_set, parse_merge_rules(read(paths["merge_rules"])))
print(meta_set.labels)

############################################################
# Map each transcript and pair it with its audio and emissions

records = read_manifest(paths["manifest"])
print(coverage_report(lexicon, [r.text for r in records]))

corpus = []
for r in records:
    seq, _ = map_transcript(lexicon, r.text)
    em = read_mace(f"{paths['emissions_dir']}/{r.id}.mace", meta_set.sha256())
    corpus.append(Utterance(r.id, read_wav(r.resolve(paths["manifest"])), seq, em))

db, report = build_database(corpus, meta_set.sha256(), len(meta_set.labels))
print("clips stored:", report.clips_stored, "skipped:", report.skipped)

############################################################
# Clips per label, then a round trip through disk

st = clipdb.stats(db)
for label, n in zip(meta_set.labels, st.counts):
    print(f"{label:>4}: {n}")

clipdb.persist(db, f"{work}/db")
print("reloaded equal:", clipdb.load(f"{work}/db", meta_set.sha256()) == db)
