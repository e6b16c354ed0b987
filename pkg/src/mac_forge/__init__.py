"""Concatenative meta-audio synthesis for low-resource ASR data augmentation."""

from .align import (
    AlignmentScore,
    Segmentation,
    brute_force_logprob,
    count_segmentations,
    forward_logprob,
    segmentation_to_samples,
    viterbi_segment,
)
from .clipdb import ClipDatabase, ClipRecord, Utterance, build_database, load, persist, stats
from .emissions import EmissionMatrix, read_mace, write_mace
from .lexicon import (
    Lexicon,
    MergeRules,
    MetaAudioSet,
    MetaSequence,
    coverage_report,
    map_transcript,
    parse_lexicon,
    parse_merge_rules,
    parse_meta_audio_set,
)
from .sampler import (
    EmpiricalTextDist,
    SelectionPolicy,
    build_text_distribution,
    derive_rng,
    generate_corpus,
    sample_transcript,
    select_clip,
)
from .synth import concatenate, energy, mean_energy, normalize_clips, synthesize_utterance
from .wav import Waveform, read_wav, write_wav

__version__ = "0.1.0"
