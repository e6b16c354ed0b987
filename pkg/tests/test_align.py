import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_emissions
from mac_forge.align import (
    Segmentation,
    brute_force_logprob,
    count_segmentations,
    forward_logprob,
    segmentation_to_samples,
    viterbi_segment,
)
from mac_forge.emissions import EmissionMatrix
from mac_forge.errors import (
    GuardExceededError,
    ImpossibleAlignmentError,
    InfeasibleAlignmentError,
    LabelRangeError,
)


def enumerate_segmentations(T, n, m):
    """All boundary tuples (0, ..., T) with every segment >= m frames."""
    for lengths in itertools.product(range(m, T + 1), repeat=n):
        if sum(lengths) == T:
            yield (0, *itertools.accumulate(lengths))


def path_logprob(logp, seq, bounds):
    return sum(logp[t, seq[i]] for i in range(len(seq)) for t in range(bounds[i], bounds[i + 1]))


def oracle_marginal(logp, seq, m):
    """Probability-space sum over explicit segmentations (no log-sum-exp)."""
    total = sum(math.exp(path_logprob(logp, seq, b)) for b in enumerate_segmentations(logp.shape[0], len(seq), m))
    return math.log(total)


def random_instance(rng, T, n, K):
    probs = rng.dirichlet(np.ones(K), size=T)
    seq = tuple(int(x) for x in rng.integers(K, size=n))
    return EmissionMatrix(np.log(probs)), seq


class TestWorkedExample:
    def test_forward(self, worked_instance):
        em, seq = worked_instance
        # (A|BB): .9*.4*.8 = .288, (AA|B): .9*.6*.8 = .432
        assert forward_logprob(em, seq) == pytest.approx(math.log(0.72), abs=1e-12)
        assert oracle_marginal(em.logp, seq, 1) == pytest.approx(math.log(0.72), abs=1e-12)

    def test_viterbi(self, worked_instance):
        em, seq = worked_instance
        seg, score = viterbi_segment(em, seq)
        assert seg.boundaries == (0, 2, 3)
        assert score == pytest.approx(math.log(0.432), abs=1e-12)
        assert list(seg.segments()) == [(0, 0, 2), (1, 2, 3)]

    def test_brute_force(self, worked_instance):
        em, seq = worked_instance
        assert abs(brute_force_logprob(em, seq) - forward_logprob(em, seq)) <= 1e-9


class TestSingleSegment:
    def test_one_label(self):
        em = make_emissions([[0.9], [0.5]])
        assert forward_logprob(em, (0,)) == pytest.approx(math.log(0.45), abs=1e-12)
        assert brute_force_logprob(em, (0,)) == forward_logprob(em, (0,))
        seg, score = viterbi_segment(em, (0,))
        assert seg.boundaries == (0, 2)


class TestErrors:
    def test_infeasible(self):
        em = make_emissions([[0.5, 0.3, 0.2]] * 2)
        with pytest.raises(InfeasibleAlignmentError):
            forward_logprob(em, (0, 1, 2))
        with pytest.raises(InfeasibleAlignmentError):
            viterbi_segment(em, (0, 1, 2))

    def test_infeasible_min_seg(self):
        em = make_emissions([[0.5, 0.5]] * 3)
        with pytest.raises(InfeasibleAlignmentError):
            forward_logprob(em, (0, 1), min_seg_frames=2)

    def test_label_range(self):
        em = make_emissions([[0.5, 0.5]] * 3)
        with pytest.raises(LabelRangeError):
            forward_logprob(em, (0, 2))

    def test_guard(self):
        em = EmissionMatrix(np.full((30, 10), -math.log(10)))
        with pytest.raises(GuardExceededError) as exc:
            brute_force_logprob(em, tuple(range(10)))
        assert exc.value.count == math.comb(29, 9)

    def test_impossible_paths(self):
        logp = np.array([[0.0, -np.inf], [0.0, -np.inf]])
        em = EmissionMatrix(logp)
        assert forward_logprob(em, (0, 1)) == -math.inf
        with pytest.raises(ImpossibleAlignmentError):
            viterbi_segment(em, (0, 1))


class TestTieBreaking:
    def test_forced_unit_segments(self):
        em = make_emissions(np.full((4, 4), 0.25))
        seg, _ = viterbi_segment(em, (3, 1, 0, 2))
        assert seg.boundaries == (0, 1, 2, 3, 4)

    def test_uniform_prefers_later_boundary(self):
        em = make_emissions(np.full((3, 2), 0.5))
        seg, _ = viterbi_segment(em, (0, 1))
        assert seg.boundaries == (0, 2, 3)

    def test_uniform_longer(self):
        em = make_emissions(np.full((7, 3), 1 / 3))
        seg, _ = viterbi_segment(em, (0, 1, 2))
        assert seg.boundaries == (0, 5, 6, 7)
        seg, _ = viterbi_segment(em, (0, 1, 2), min_seg_frames=2)
        assert seg.boundaries == (0, 3, 5, 7)


class TestMinSegFrames:
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_segments_respect_minimum(self, m):
        rng = np.random.default_rng(m)
        for _ in range(20):
            em, seq = random_instance(rng, 9, 3, 4)
            seg, _ = viterbi_segment(em, seq, m)
            assert all(e - s >= m for _, s, e in seg.segments())
            assert abs(forward_logprob(em, seq, m) - oracle_marginal(em.logp, seq, m)) <= 1e-9


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 4), st.integers(1, 2), st.integers(0, 2**32 - 1))
    def test_forward_matches_oracles(self, T, n, m, seed):
        if T < n * m:
            return
        em, seq = random_instance(np.random.default_rng(seed), T, n, 3)
        fwd = forward_logprob(em, seq, m)
        assert abs(fwd - brute_force_logprob(em, seq, m)) <= 1e-9
        assert abs(fwd - oracle_marginal(em.logp, seq, m)) <= 1e-9

    @settings(max_examples=150, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 4), st.integers(1, 2), st.integers(0, 2**32 - 1))
    def test_viterbi_is_best_and_rescores_exactly(self, T, n, m, seed):
        if T < n * m:
            return
        em, seq = random_instance(np.random.default_rng(seed), T, n, 3)
        seg, score = viterbi_segment(em, seq, m)
        # Left-to-right re-sum of the chosen frames reproduces the score bit for bit.
        rescored = sum(float(em.logp[t, lab]) for lab, s, e in seg.segments() for t in range(s, e))
        assert rescored == score
        best = max(path_logprob(em.logp, seq, b) for b in enumerate_segmentations(T, len(seq), m))
        assert score == pytest.approx(best, abs=1e-12)
        fwd = forward_logprob(em, seq, m)
        assert score <= fwd
        assert (score == fwd) == (count_segmentations(T, n, m) == 1)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(2, 10), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_appending_certain_frame_never_hurts(self, T, n, seed):
        if T < n:
            return
        em, seq = random_instance(np.random.default_rng(seed), T, n, 3)
        extra = np.full((1, 3), -np.inf)
        extra[0, seq[-1]] = 0.0
        longer = EmissionMatrix(np.vstack([em.logp, extra]))
        assert viterbi_segment(longer, seq)[1] >= viterbi_segment(em, seq)[1]


class TestRecovery:
    def test_near_one_hot(self):
        rng = np.random.default_rng(7)
        K = 6
        for _ in range(50):
            n = int(rng.integers(2, 7))
            seq = [int(rng.integers(K))]
            while len(seq) < n:
                k = int(rng.integers(K))
                if k != seq[-1]:
                    seq.append(k)
            lengths = rng.integers(1, 8, size=n)
            frames = np.repeat(seq, lengths)
            probs = np.full((frames.size, K), 0.03 / (K - 1))
            probs[np.arange(frames.size), frames] = 0.97
            seg, _ = viterbi_segment(EmissionMatrix(np.log(probs)), seq)
            assert seg.boundaries == (0, *np.cumsum(lengths).tolist())


class TestSamples:
    def _seg(self, bounds):
        return Segmentation(tuple(range(len(bounds) - 1)), bounds, (0.0,) * (len(bounds) - 1))

    def test_multiply(self):
        assert segmentation_to_samples(self._seg((0, 2, 3)), 160) == [(0, 320), (320, 480)]

    def test_clamp(self):
        assert segmentation_to_samples(self._seg((0, 1)), 160, 100) == [(0, 100)]

    def test_empty_after_clamp(self):
        ranges = segmentation_to_samples(self._seg((0, 1, 2)), 160, 100)
        assert ranges == [(0, 100), (100, 100)]

    def test_bad_boundaries(self):
        with pytest.raises(ValueError):
            Segmentation((0, 1), (0, 2, 2), (0.0, 0.0))


def test_count_segmentations_matches_enumeration():
    for T in range(1, 9):
        for n in range(1, 4):
            for m in (1, 2):
                assert count_segmentations(T, n, m) == sum(1 for _ in enumerate_segmentations(T, n, m))
