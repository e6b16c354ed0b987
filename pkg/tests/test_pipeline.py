import io
import json
import math
import os
import shutil

import numpy as np
import pytest

from mac_forge import clipdb
from mac_forge.manifest import ManifestRecord, read_manifest, write_manifest
from mac_forge.pipeline import choose_synth_prefix, main
from mac_forge.toy import write_toy_corpus
from mac_forge.wav import Waveform, write_wav


def run(*argv):
    out = io.StringIO()
    status = main([str(a) for a in argv], out=out)
    return status, out.getvalue()


def run_json(*argv):
    status, text = run(*argv, "--json")
    return status, json.loads(text)


def lex_flags(toy):
    return ["--meta-set", toy["meta_set"], "--lexicon", toy["lexicon"], "--merge-rules", toy["merge_rules"]]


def build(toy, db_dir, *extra):
    return run_json("build-db", *lex_flags(toy), "--manifest", toy["manifest"],
                    "--emissions-dir", toy["emissions_dir"], "--db-dir", db_dir, *extra)


@pytest.fixture
def toy(tmp_path):
    return write_toy_corpus(tmp_path / "toy")


class TestBuildDb:
    def test_toy_full_coverage(self, toy, tmp_path):
        status, rep = build(toy, tmp_path / "db")
        assert status == 0
        assert rep["coverage"] == 1.0 and rep["skipped"] == [] and rep["utterances_processed"] == 8
        assert clipdb.stats(clipdb.load(tmp_path / "db")).coverage == 1.0

    def test_missing_emission_skipped(self, toy, tmp_path):
        os.remove(os.path.join(toy["emissions_dir"], "utt03.mace"))
        status, rep = build(toy, tmp_path / "db")
        assert status == 0
        assert rep["utterances_processed"] == 7
        assert rep["skipped"] == [{"id": "utt03", "reason": "missing emission file"}]

    def test_all_missing(self, toy, tmp_path):
        shutil.rmtree(toy["emissions_dir"])
        os.mkdir(toy["emissions_dir"])
        status, rep = build(toy, tmp_path / "db")
        assert status == 2
        assert not os.path.exists(tmp_path / "db")

    def test_refuses_existing_db(self, toy, tmp_path):
        assert build(toy, tmp_path / "db")[0] == 0
        assert build(toy, tmp_path / "db")[0] == 1
        assert build(toy, tmp_path / "db", "--force")[0] == 0

    def test_wrong_meta_set(self, toy, tmp_path):
        with open(toy["meta_set"], "a") as f:
            f.write("# edited\n")
        status, rep = build(toy, tmp_path / "db")
        assert status == 2 and "HashMismatchError" in rep["error"]

    def test_missing_flag(self, toy, tmp_path):
        status, rep = run_json("build-db", "--meta-set", toy["meta_set"])
        assert status == 1 and "--lexicon" in rep["error"]

    def test_config_file(self, toy, tmp_path):
        cfg = tmp_path / "build.conf"
        cfg.write_text(
            f"meta_set={toy['meta_set']}\nlexicon={toy['lexicon']}\nmerge-rules={toy['merge_rules']}\n"
            f"manifest={toy['manifest']}\nemissions_dir={toy['emissions_dir']}\n"
            f"db_dir={tmp_path / 'db'}\nmin_clip_samples=100000\n"
        )
        # The config's huge min_clip_samples drops every clip; the flag overrides it.
        assert run("build-db", "--config", cfg)[0] == 2
        assert run("build-db", "--config", cfg, "--min-clip-samples", "80")[0] == 0

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.conf"
        cfg.write_text("bogus=1\n")
        assert run("build-db", "--config", cfg)[0] == 1


class TestSynth:
    @pytest.fixture
    def db_dir(self, toy, tmp_path):
        build(toy, tmp_path / "db")
        return tmp_path / "db"

    def synth(self, toy, db_dir, out_dir, *extra):
        return run_json("synth", *lex_flags(toy), "--db-dir", db_dir, "--text", toy["texts"],
                        "--exclude", toy["exclude"], "--out-dir", out_dir, *extra)

    def test_summary(self, toy, db_dir, tmp_path):
        status, rep = self.synth(toy, db_dir, tmp_path / "out", "-M", 5, "--seed", 42)
        assert status == 0
        assert rep["written"] == 5 and rep["seed"] == 42 and rep["clamp_events"] == 0
        assert rep["coverage"] == 1.0 and rep["total_seconds"] > 0
        texts = {r.text for r in read_manifest(tmp_path / "out" / "manifest.jsonl")}
        assert "cat" not in texts

    def test_seed_printed_when_omitted(self, toy, db_dir, tmp_path):
        status, text = run("synth", *lex_flags(toy), "--db-dir", db_dir, "--text", toy["texts"],
                           "-M", 2, "--out-dir", tmp_path / "out")
        assert status == 0
        line = next(l for l in text.splitlines() if l.startswith("seed not given"))
        seed = int(line.rsplit(" ", 1)[1])
        status, _ = run("synth", *lex_flags(toy), "--db-dir", db_dir, "--text", toy["texts"],
                        "-M", 2, "--out-dir", tmp_path / "again", "--seed", seed)
        assert (tmp_path / "out" / "manifest.jsonl").read_bytes() == (tmp_path / "again" / "manifest.jsonl").read_bytes()

    def test_refuses_non_empty_out(self, toy, db_dir, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / "keep.txt").write_text("x")
        assert self.synth(toy, db_dir, out, "-M", 2, "--seed", 1)[0] == 1
        assert (out / "keep.txt").exists()
        assert self.synth(toy, db_dir, out, "-M", 2, "--seed", 1, "--force")[0] == 0
        assert not (out / "keep.txt").exists()

    def test_unmappable_text_fails(self, toy, db_dir, tmp_path):
        texts = tmp_path / "bad.txt"
        texts.write_text("xyz\n")
        status, rep = run_json("synth", *lex_flags(toy), "--db-dir", db_dir, "--text", texts,
                               "-M", 1, "--seed", 1, "--out-dir", tmp_path / "out")
        assert status == 2 and rep["failures"][0]["attempts"] == 10

    def test_each_once(self, toy, db_dir, tmp_path):
        status, rep = self.synth(toy, db_dir, tmp_path / "out", "--each-once", "--seed", 3)
        assert status == 0 and rep["written"] == 9


def _wav_manifest(root, name, durations, source, rate=100):
    records = []
    for i, d in enumerate(durations):
        rel = f"{name}/{i}.wav"
        os.makedirs(os.path.join(root, name), exist_ok=True)
        write_wav(os.path.join(root, rel), Waveform(np.zeros(int(d * rate), dtype=np.int16), rate))
        records.append(ManifestRecord(f"{name}-{i}", rel, "t", source))
    path = os.path.join(root, f"{name}.jsonl")
    write_manifest(path, records)
    return path


class TestMix:
    def test_prefix_choice(self):
        assert choose_synth_prefix(100.0, [30.0] * 10, 0.5) == (3, False)  # 90 s vs 120 s -> 90 is closer
        assert choose_synth_prefix(100.0, [30.0] * 10, 0.0) == (0, False)
        assert choose_synth_prefix(100.0, [30.0] * 2, 0.9) == (2, True)
        assert choose_synth_prefix(100.0, [30.0] * 2, 1.0) == (2, True)
        assert choose_synth_prefix(0.0, [30.0] * 2, 1.0) == (2, False)

    def test_cli_half(self, tmp_path):
        real = _wav_manifest(tmp_path, "real", [10.0] * 10, "real")
        synth = _wav_manifest(tmp_path, "synth", [10.0] * 30, "mac")
        out = tmp_path / "mixed" / "all.jsonl"
        os.makedirs(out.parent)
        status, rep = run_json("mix", "--real", real, "--synth", synth, "--ratio", 0.5, "--out", out)
        assert status == 0
        assert rep["synth_seconds"] == pytest.approx(100.0)
        mixed = read_manifest(out)
        assert [r.source for r in mixed] == ["real"] * 10 + ["mac"] * 10
        assert all(os.path.isfile(r.resolve(out)) for r in mixed)

    def test_cli_zero(self, tmp_path):
        real = _wav_manifest(tmp_path, "real", [1.0] * 3, "real")
        synth = _wav_manifest(tmp_path, "synth", [1.0] * 3, "mac")
        status, rep = run_json("mix", "--real", real, "--synth", synth, "--ratio", 0, "--out", tmp_path / "m.jsonl")
        assert status == 0 and rep["synth_records"] == 0

    def test_cli_saturated(self, tmp_path):
        real = _wav_manifest(tmp_path, "real", [1.0] * 3, "real")
        synth = _wav_manifest(tmp_path, "synth", [1.0] * 3, "mac")
        status, text = run("mix", "--real", real, "--synth", synth, "--ratio", 0.9, "--out", tmp_path / "m.jsonl")
        assert status == 0 and "warning" in text
        assert len(read_manifest(tmp_path / "m.jsonl")) == 6

    def test_bad_ratio(self, tmp_path):
        real = _wav_manifest(tmp_path, "real", [1.0], "real")
        assert run("mix", "--real", real, "--synth", real, "--ratio", 1.5, "--out", tmp_path / "m")[0] == 1

    def test_within_one_utterance(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            real = float(rng.uniform(10, 200))
            synth = rng.uniform(0.5, 8, size=int(rng.integers(1, 80))).tolist()
            rho = float(rng.uniform(0, 0.95))
            k, saturated = choose_synth_prefix(real, synth, rho)
            if saturated:
                assert k == len(synth)
                continue
            target = rho * real / (1 - rho)
            assert abs(sum(synth[:k]) - target) <= max(synth)


class TestStatsAlign:
    def test_stats_empty_db(self, tmp_path):
        clipdb.persist(clipdb.ClipDatabase("ab" * 32, 3, 16000), tmp_path / "db")
        status, rep = run_json("stats", "--db-dir", tmp_path / "db")
        assert status == 0 and rep["coverage"] == 0 and rep["total_seconds"] == 0

    def test_stats_missing(self, tmp_path):
        assert run("stats", "--db-dir", tmp_path)[0] == 2

    @pytest.fixture
    def worked_files(self, tmp_path):
        from mac_forge.emissions import EmissionMatrix, write_mace, file_sha256

        meta = tmp_path / "set.txt"
        meta.write_text("A\nB\n")
        em = EmissionMatrix(np.log([[0.9, 0.1], [0.6, 0.4], [0.2, 0.8]]))
        write_mace(tmp_path / "u.mace", em, file_sha256(meta))
        return meta, tmp_path / "u.mace"

    def test_align_worked_instance(self, worked_files):
        meta, mace = worked_files
        status, rep = run_json("align", "--meta-set", meta, "--emissions", mace, "--labels", "A B")
        assert status == 0
        assert rep["boundaries"] == [0, 2, 3]
        # float32 storage of the log-posteriors bounds the agreement.
        assert rep["log_marginal"] == pytest.approx(math.log(0.72), abs=1e-6)
        assert rep["log_viterbi"] == pytest.approx(math.log(0.432), abs=1e-6)
        status, text = run("align", "--meta-set", meta, "--emissions", mace, "--labels", "A B")
        assert "boundaries: (0, 2, 3)" in text

    def test_align_hash_mismatch(self, worked_files, tmp_path):
        _, mace = worked_files
        other = tmp_path / "other.txt"
        other.write_text("A\nB\n# changed\n")
        status, rep = run_json("align", "--meta-set", other, "--emissions", mace, "--labels", "A B")
        assert status == 2 and "HashMismatchError" in rep["error"]

    def test_align_transcript(self, toy):
        status, rep = run_json("align", *lex_flags(toy), "--emissions",
                               os.path.join(toy["emissions_dir"], "utt01.mace"), "--transcript", "cat")
        assert status == 0 and rep["labels"] == "K AE T" and len(rep["segments"]) == 3

    def test_align_needs_one_source(self, worked_files):
        meta, mace = worked_files
        assert run("align", "--meta-set", meta, "--emissions", mace)[0] == 1
