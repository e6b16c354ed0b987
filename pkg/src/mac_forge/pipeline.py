"""``mac-forge`` command line: build-db, synth, mix, stats, align.

Exit status is 0 on success, 1 for user or configuration errors (bad flags,
missing files, unparsable config) and 2 for data errors (format or hash
mismatches, nothing aligned, uncoverable transcripts).

Every command also reads an optional ``--config FILE`` of ``key=value``
lines, keys spelled like the long flags (``min_seg_frames=2`` or
``min-seg-frames=2``).  Flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass

from . import clipdb
from .align import align as run_align
from .clipdb import MIN_CLIP_SAMPLES, Utterance, build_database
from .emissions import file_sha256, read_mace
from .errors import (
    EmptySequenceError,
    FormatError,
    MacForgeError,
    OOVError,
    ParseError,
)
from .lexicon import (
    MergeRules,
    MetaSequence,
    label_string,
    map_transcript,
    parse_lexicon,
    parse_merge_rules,
    parse_meta_audio_set,
)
from .manifest import ManifestRecord, read_lines, read_manifest, write_manifest
from .sampler import (
    RETRY_CAP,
    SelectionPolicy,
    build_text_distribution,
    fresh_seed,
    generate_corpus,
)
from .util import thread_cap
from .wav import read_wav, wav_info

log = logging.getLogger("mac_forge")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    """Bad configuration; maps to exit status 1."""


class DataError(Exception):
    """Bad or insufficient data; maps to exit status 2."""


class Reporter:
    """Collects report fields; prints them as lines or as one JSON object."""

    def __init__(self, as_json: bool, out=None):
        self.as_json = as_json
        self.out = out or sys.stdout
        self.fields: dict = {}

    def add(self, key, value, text=None):
        self.fields[key] = value
        if not self.as_json and text is not None:
            print(text, file=self.out)

    def line(self, text):
        if not self.as_json:
            print(text, file=self.out)

    def finish(self):
        if self.as_json:
            print(json.dumps(self.fields, ensure_ascii=False, sort_keys=True), file=self.out)


# -- configuration ----------------------------------------------------------

DEFAULTS = {
    "min_seg_frames": 1,
    "min_clip_samples": MIN_CLIP_SAMPLES,
    "min_log_score": -math.inf,
    "oov_policy": "error",
    "policy": "uniform",
    "temperature": 1.0,
    "count": 0,
    "ratio": 0.5,
    "retry_cap": RETRY_CAP,
}


def read_config(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq or not key.strip():
                raise ParseError("expected key=value", number, os.fspath(path))
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    config = read_config(args.config) if getattr(args, "config", None) else {}
    actions = {a.dest: a for a in parser._actions}
    for key, raw in config.items():
        action = actions.get(key)
        if action is None or key in ("config", "help", "command"):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, key) is not None and getattr(args, key) is not False:
            continue  # flag given on the command line
        if action.const is True and action.nargs == 0:
            value = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config {key}={raw!r}: {exc}") from exc
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config {key}={raw!r}: choose from {list(action.choices)}")
        setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, "absent") is None:
            setattr(args, key, value)
    return args


def _require(args, *names):
    for name in names:
        value = getattr(args, name, None)
        if value is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def _read_text(path, what) -> str:
    _require_file(path, what)
    with open(path, encoding="utf-8") as f:
        return f.read()


@dataclass
class Resources:
    meta_set: object
    meta_hash: str
    lexicon: object | None


def _load_resources(args, need_lexicon=True) -> Resources:
    meta_text = _read_text(args.meta_set, "meta-audio set")
    meta_set = parse_meta_audio_set(meta_text, source=args.meta_set)
    meta_hash = file_sha256(args.meta_set)
    lexicon = None
    if need_lexicon:
        rules = MergeRules()
        if getattr(args, "merge_rules", None):
            rules = parse_merge_rules(_read_text(args.merge_rules, "merge rules"), source=args.merge_rules)
        lexicon = parse_lexicon(_read_text(args.lexicon, "lexicon"), meta_set, rules, source=args.lexicon)
    return Resources(meta_set, meta_hash, lexicon)


def _prepare_out_dir(path, force: bool) -> None:
    if os.path.exists(path) and (not os.path.isdir(path) or os.listdir(path)) and not force:
        raise UsageError(f"{path} exists and is not empty (use --force to replace it)")


def _swap_into_place(tmp: str, final: str) -> None:
    if os.path.exists(final):
        shutil.rmtree(final)
    os.replace(tmp, final)


# -- commands ---------------------------------------------------------------

def cmd_build_db(args, rep: Reporter) -> int:
    _require(args, "meta_set", "lexicon", "manifest", "emissions_dir", "db_dir")
    res = _load_resources(args)
    _require_file(args.manifest, "manifest")
    if not os.path.isdir(args.emissions_dir):
        raise UsageError(f"emissions directory not found: {args.emissions_dir}")
    _prepare_out_dir(args.db_dir, args.force)

    corpus, skipped = [], []
    for rec in read_manifest(args.manifest):
        try:
            seq, _ = map_transcript(res.lexicon, rec.text, args.oov_policy)
        except (OOVError, EmptySequenceError) as exc:
            skipped.append((rec.id, f"mapping: {exc}"))
            continue
        mace = os.path.join(args.emissions_dir, f"{rec.id}.mace")
        if not os.path.isfile(mace):
            skipped.append((rec.id, "missing emission file"))
            continue
        em = read_mace(mace, expected_hash=res.meta_hash, renormalize=args.renormalize)
        audio = rec.resolve(args.manifest)
        if not os.path.isfile(audio):
            skipped.append((rec.id, "missing audio file"))
            continue
        corpus.append(Utterance(rec.id, read_wav(audio), seq, em))

    rate = corpus[0].waveform.sample_rate if corpus else 16000
    db, report = build_database(
        corpus, res.meta_hash, len(res.meta_set), rate,
        min_seg_frames=args.min_seg_frames,
        min_clip_samples=args.min_clip_samples,
        min_log_score=args.min_log_score,
        workers=thread_cap(),
    )
    skipped.extend(report.skipped)
    rep.add("utterances_processed", report.utterances_aligned,
            f"utterances processed: {report.utterances_aligned}")
    rep.add("skipped", [{"id": u, "reason": r} for u, r in skipped], f"utterances skipped: {len(skipped)}")
    for utt, reason in skipped:
        rep.line(f"  skip {utt}: {reason}")
    rep.add("clips_extracted", report.clips_extracted, f"clips extracted: {report.clips_extracted}")
    rep.add("clips_dropped", len(report.clips_dropped), f"clips dropped: {len(report.clips_dropped)}")
    rep.add("clips_stored", len(db), f"clips stored: {len(db)}")
    if len(db) == 0:
        rep.add("error", "no clips stored; database not written", "error: no clips stored; database not written")
        return EXIT_DATA
    clipdb.persist(db, args.db_dir, overwrite=args.force)
    st = clipdb.stats(db)
    rep.add("coverage", st.coverage, f"coverage: {st.covered}/{st.num_labels} = {st.coverage:.4f}")
    rep.add("total_seconds", st.total_seconds, f"total clip seconds: {st.total_seconds:.3f}")
    rep.add("db_dir", args.db_dir, f"database: {args.db_dir}")
    return EXIT_OK


def cmd_synth(args, rep: Reporter) -> int:
    _require(args, "db_dir", "meta_set", "lexicon", "text", "out_dir")
    res = _load_resources(args)
    db = clipdb.load(args.db_dir, expected_hash=res.meta_hash)
    texts = read_lines(args.text) if os.path.isfile(args.text) else None
    if texts is None:
        raise UsageError(f"text corpus not found: {args.text}")
    exclusions = []
    if args.exclude:
        _require_file(args.exclude, "exclusion list")
        exclusions = read_lines(args.exclude)
    dist = build_text_distribution(texts, exclusions)
    try:
        policy = SelectionPolicy(args.policy, args.temperature)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    _prepare_out_dir(args.out_dir, args.force)

    seed = args.seed
    if seed is None:
        seed = fresh_seed()
        rep.line(f"seed not given; using --seed {seed}")
    rep.add("seed", seed)

    final = os.path.abspath(args.out_dir)
    os.makedirs(os.path.dirname(final), exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".synth-", dir=os.path.dirname(final))
    try:
        result = generate_corpus(
            db, res.lexicon, dist, args.count, policy, seed, tmp,
            each_once=args.each_once, retry_cap=args.retry_cap,
            oov_policy=args.oov_policy, workers=thread_cap(),
        )
        _swap_into_place(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise

    st = clipdb.stats(db)
    rep.add("written", len(result.records), f"utterances written: {len(result.records)}")
    rep.add("coverage", st.coverage, f"database coverage: {st.covered}/{st.num_labels} = {st.coverage:.4f}")
    rep.add("clamp_events", result.clamp_events, f"clip-clamp events: {result.clamp_events}")
    rep.add("total_seconds", result.total_seconds, f"total seconds: {result.total_seconds:.3f}")
    rep.add("manifest", os.path.join(args.out_dir, "manifest.jsonl"),
            f"manifest: {os.path.join(args.out_dir, 'manifest.jsonl')}")
    rep.add("failures", [{"slot": f.slot, "attempts": f.attempts, "reasons": f.reasons} for f in result.failures],
            f"failed slots: {len(result.failures)}")
    for f in result.failures:
        rep.line(f"  slot {f.slot}: gave up after {f.attempts} attempt(s); last: {f.reasons[-1]}")
    return EXIT_OK if result.ok else EXIT_DATA


def durations(records, manifest_path) -> list[float]:
    out = []
    for r in records:
        path = r.resolve(manifest_path)
        if not os.path.isfile(path):
            raise DataError(f"{manifest_path}: audio for {r.id!r} not found: {r.audio}")
        n, rate = wav_info(path)
        out.append(n / rate)
    return out


def choose_synth_prefix(real_seconds: float, synth_durations, ratio: float) -> tuple[int, bool]:
    """How many synthesized utterances to add so synth/(real+synth) ~ ``ratio``.

    Returns ``(k, saturated)``; ``saturated`` is True when even all of the
    synthesized audio falls short of the requested ratio.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    n = len(synth_durations)
    if ratio == 0.0 or n == 0:
        return 0, ratio > 0.0 and n == 0
    total = sum(synth_durations)
    if ratio == 1.0:
        return n, real_seconds > 0
    target = ratio * real_seconds / (1.0 - ratio)
    if total < target:
        return n, True
    acc = 0.0
    for k, d in enumerate(synth_durations, start=1):
        prev, acc = acc, acc + d
        if acc >= target:
            return (k - 1, False) if target - prev < acc - target else (k, False)
    return n, False


def mix_manifests(real, synth, real_durations, synth_durations, ratio):
    k, saturated = choose_synth_prefix(sum(real_durations), synth_durations, ratio)
    return list(real) + list(synth[:k]), k, saturated


def _rebase(records, manifest_path, out_path):
    base = os.path.dirname(os.path.abspath(out_path))
    return [
        ManifestRecord(r.id, os.path.relpath(r.resolve(manifest_path), base), r.text, r.source, r.provenance)
        for r in records
    ]


def cmd_mix(args, rep: Reporter) -> int:
    _require(args, "real", "synth", "out")
    _require_file(args.real, "real manifest")
    _require_file(args.synth, "synthesized manifest")
    if not 0.0 <= args.ratio <= 1.0:
        raise UsageError("--ratio must lie in [0, 1]")
    real, synth = read_manifest(args.real), read_manifest(args.synth)
    ids = [r.id for r in real] + [r.id for r in synth]
    if len(set(ids)) != len(ids):
        raise DataError("real and synthesized manifests share record ids")
    real_d, synth_d = durations(real, args.real), durations(synth, args.synth)
    k, saturated = choose_synth_prefix(sum(real_d), synth_d, args.ratio)
    out = _rebase(real, args.real, args.out) + _rebase(synth[:k], args.synth, args.out)
    write_manifest(args.out, out)
    real_s, synth_s = sum(real_d), sum(synth_d[:k])
    achieved = synth_s / (real_s + synth_s) if real_s + synth_s > 0 else 0.0
    rep.add("real_records", len(real), f"real records: {len(real)} ({real_s:.3f} s)")
    rep.add("synth_records", k, f"synthesized records: {k} of {len(synth)} ({synth_s:.3f} s)")
    rep.add("real_seconds", real_s)
    rep.add("synth_seconds", synth_s)
    rep.add("ratio_requested", args.ratio)
    rep.add("ratio_achieved", achieved, f"synth duration ratio: {achieved:.4f} (requested {args.ratio})")
    rep.add("saturated", saturated)
    if saturated:
        msg = "warning: not enough synthesized audio for the requested ratio; all of it was included"
        rep.line(msg)
        log.warning(msg)
    rep.add("out", args.out, f"manifest: {args.out}")
    return EXIT_OK


def cmd_stats(args, rep: Reporter) -> int:
    _require(args, "db_dir")
    labels = None
    expected = None
    if args.meta_set:
        res = _load_resources(args, need_lexicon=False)
        labels, expected = res.meta_set.labels, res.meta_hash
    db = clipdb.load(args.db_dir, expected_hash=expected)
    st = clipdb.stats(db)
    rep.add("num_labels", st.num_labels)
    rep.add("total_clips", sum(st.counts), f"clips: {sum(st.counts)}")
    rep.add("total_seconds", st.total_seconds, f"total clip seconds: {st.total_seconds:.3f}")
    rep.add("coverage", st.coverage, f"coverage: {st.covered}/{st.num_labels} = {st.coverage:.4f}")
    names = labels or [str(i) for i in range(st.num_labels)]
    rep.add("counts", dict(zip(names, st.counts)))
    for name, c in zip(names, st.counts):
        rep.line(f"  {name}\t{c}")
    return EXIT_OK


def cmd_align(args, rep: Reporter) -> int:
    _require(args, "meta_set", "emissions")
    if (args.transcript is None) == (args.labels is None):
        raise UsageError("give exactly one of --transcript or --labels")
    res = _load_resources(args, need_lexicon=args.transcript is not None)
    if args.transcript is not None:
        _require(args, "lexicon")
        seq, oov = map_transcript(res.lexicon, args.transcript, args.oov_policy)
        if oov:
            rep.add("oov", dict(oov), f"skipped OOV graphemes: {dict(oov)}")
    else:
        try:
            seq = MetaSequence(tuple(res.meta_set.id_of(lab) for lab in args.labels.split()))
        except KeyError as exc:
            raise UsageError(f"unknown label {exc.args[0]!r}") from exc
    _require_file(args.emissions, "emission file")
    em = read_mace(args.emissions, expected_hash=res.meta_hash, renormalize=args.renormalize)
    seg, score = run_align(em, seq, args.min_seg_frames)
    rep.add("labels", label_string(res.meta_set, seq), f"labels: {label_string(res.meta_set, seq)}")
    rep.add("log_marginal", score.log_marginal,
            f"log marginal: {score.log_marginal:.12g} (p = {math.exp(score.log_marginal):.6g})")
    rep.add("log_viterbi", score.log_viterbi,
            f"log viterbi: {score.log_viterbi:.12g} (p = {math.exp(score.log_viterbi):.6g})")
    rep.add("boundaries", list(seg.boundaries), f"boundaries: {tuple(seg.boundaries)}")
    segments = []
    for (label, s, e), sc in zip(seg.segments(), seg.segment_scores):
        segments.append({"label": res.meta_set.labels[label], "start": s, "end": e, "log_score": sc})
        rep.line(f"  {res.meta_set.labels[label]}\t[{s}, {e})\t{sc:.6g}")
    rep.add("segments", segments)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--json", action="store_true", help="print the report as one JSON object")
    p.add_argument("-v", "--verbose", action="store_true")


def _lexicon_flags(p, lexicon_required=True):
    p.add_argument("--meta-set", help="meta-audio set file")
    p.add_argument("--lexicon", help="pronunciation lexicon (TSV)")
    p.add_argument("--merge-rules", help="alias<TAB>canonical label merge rules")
    p.add_argument("--oov-policy", choices=("error", "skip"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mac-forge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="align a real corpus and build the clip database")
    _common(p)
    _lexicon_flags(p)
    p.add_argument("--manifest", help="JSON-lines manifest of the aligned corpus")
    p.add_argument("--emissions-dir", help="directory of <id>.mace emission files")
    p.add_argument("--db-dir", help="output database directory")
    p.add_argument("--min-seg-frames", type=int)
    p.add_argument("--min-clip-samples", type=int)
    p.add_argument("--min-log-score", type=float, help="drop clips scoring below this (default: keep all)")
    p.add_argument("--renormalize", action="store_true", help="log-softmax emission rows (for logits)")
    p.add_argument("--force", action="store_true", help="replace a non-empty --db-dir")
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("synth", help="synthesize audio for sampled transcripts")
    _common(p)
    _lexicon_flags(p)
    p.add_argument("--db-dir")
    p.add_argument("--text", help="text-only corpus, one transcript per line")
    p.add_argument("--exclude", help="transcripts to exclude, one per line")
    p.add_argument("-M", "--count", type=int, help="number of utterances to synthesize")
    p.add_argument("--seed", type=int, help="master seed (drawn and printed when omitted)")
    p.add_argument("--policy", choices=("uniform", "best", "weighted"))
    p.add_argument("--temperature", type=float)
    p.add_argument("--each-once", action="store_true", help="synthesize each distinct transcript once")
    p.add_argument("--retry-cap", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--force", action="store_true", help="replace a non-empty --out-dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mix", help="combine real and synthesized manifests at a duration ratio")
    _common(p)
    p.add_argument("--real")
    p.add_argument("--synth")
    p.add_argument("--ratio", type=float, help="synthesized share of total duration (default 0.5)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("stats", help="summarize a clip database")
    _common(p)
    p.add_argument("--db-dir")
    p.add_argument("--meta-set", help="verify the hash and print label names")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("align", help="align one utterance and print scores and boundaries")
    _common(p)
    _lexicon_flags(p)
    p.add_argument("--emissions", help=".mace emission file")
    p.add_argument("--transcript", help="transcript text (needs --lexicon)")
    p.add_argument("--labels", help="space-separated meta-audio labels")
    p.add_argument("--min-seg-frames", type=int)
    p.add_argument("--renormalize", action="store_true")
    p.set_defaults(func=cmd_align)
    return parser


def main(argv=None, out=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    rep = Reporter(args.json, out)
    try:
        args = _apply_config(subparser, args)
        status = args.func(args, rep)
    except (UsageError, ParseError, FileExistsError) as exc:
        rep.add("error", str(exc))
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_USAGE
    except (DataError, FormatError, MacForgeError) as exc:
        rep.add("error", f"{type(exc).__name__}: {exc}")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_DATA
    rep.add("exit_status", status)
    rep.finish()
    return status


if __name__ == "__main__":
    sys.exit(main())
