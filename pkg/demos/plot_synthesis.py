"""
Synthesizing and mixing new utterances
======================================

Draw transcripts from a text list, glue clips together for each one,
and mix the result with the real recordings at a target duration share.
"""

import io
import json
import tempfile

from mac_forge.pipeline import main
from mac_forge.toy import write_toy_corpus

work = tempfile.mkdtemp()
toy = write_toy_corpus(work + "/toy")
lex = ["--meta-set", toy["meta_set"], "--lexicon", toy["lexicon"], "--merge-rules", toy["merge_rules"]]


def run(*argv):
    out = io.StringIO()
    status = main([*map(str, argv), "--json"], out=out)
    return status, json.loads(out.getvalue())


############################################################
# Clip database, then 20 utterances from a fixed seed

run("build-db", *lex, "--manifest", toy["manifest"], "--emissions-dir", toy["emissions_dir"], "--db-dir", work + "/db")
status, rep = run("synth", *lex, "--db-dir", work + "/db", "--text", toy["texts"], "--exclude", toy["exclude"],
                  "--out-dir", work + "/synth", "-M", 20, "--seed", 42)
print(status, rep["written"], "utterances,", round(rep["total_seconds"], 2), "s")

with open(work + "/synth/manifest.jsonl", encoding="utf-8") as f:
    for line in f.readlines()[:3]:
        print(line.strip())

############################################################
# Mix so that roughly half of the training audio is synthetic

for ratio in (0.0, 0.25, 0.5):
    _, rep = run("mix", "--real", toy["manifest"], "--synth", work + "/synth/manifest.jsonl",
                 "--ratio", ratio, "--out", f"{work}/train-{ratio}.jsonl")
    print(f"requested {ratio:.2f}  achieved {rep['ratio_achieved']:.3f}  synth records {rep['synth_records']}")
