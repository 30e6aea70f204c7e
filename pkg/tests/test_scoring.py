import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from seqdec.errors import ConfigurationError
from seqdec.lm import train
from seqdec.scoring import (
    AttentionMatrix,
    RepetitionState,
    ScoreConfig,
    apply_temperature,
    coverage_penalty,
    final_score,
    fuse_step,
    length_bonus,
    length_normalized,
    length_window,
    repetition_penalty,
    repetition_step,
    sibling_penalty,
)
from seqdec.textprep import EOS_ID, Vocabulary

logits = arrays(np.float64, st.integers(2, 12), elements=st.floats(-20, 20))


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    m = z.max()
    return z - m - math.log(np.exp(z - m).sum())


def onehots(cols, S):
    return np.eye(S)[cols]


class TestScoreConfig:
    def test_defaults_are_identity(self):
        cfg = ScoreConfig()
        assert (cfg.lm_weight, cfg.length_bonus, cfg.temperature, cfg.diversity_gamma) == (0, 0, 1, 0)
        assert (cfg.coverage_weight, cfg.rep_penalty, cfg.length_normalize, cfg.window_enabled) == (0, 0, False, False)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lm_weight": -1},
            {"temperature": 0},
            {"rep_threshold": 0},
            {"rep_threshold": 1.5},
            {"coverage_floor": 0},
            {"length_normalize": True, "length_bonus": 0.5},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            ScoreConfig(**kwargs)


class TestFusion:
    def test_zero_weight_is_identity(self):
        assert fuse_step(-1.25, -7.0, 0.0) == -1.25

    def test_sum(self):
        assert fuse_step(-1.0, -2.0, 1.0) == -3.0

    def test_negative_weight(self):
        with pytest.raises(ConfigurationError):
            fuse_step(-1.0, -2.0, -0.1)

    def test_sequence_fusion_is_sum_of_steps(self, rng):
        vocab = Vocabulary.from_tokens("abcde")
        corpus = [tuple(int(x) for x in rng.integers(4, 9, size=6)) for _ in range(30)]
        lm = train(corpus, vocab, order=3)
        seq = (4, 6, 5, 8, 7)
        model_steps = rng.uniform(-3, -0.1, size=len(seq) + 1)
        targets = seq + (EOS_ID,)
        stepwise = sum(fuse_step(model_steps[i], lm.logprob(seq[:i], targets[i]), 0.5) for i in range(len(targets)))
        sequence_level = model_steps.sum() + 0.5 * lm.sequence_logprob(seq)
        assert stepwise == pytest.approx(sequence_level, abs=1e-12)


class TestTemperature:
    def test_identity(self, rng):
        lp = log_softmax(rng.normal(size=7))
        np.testing.assert_allclose(apply_temperature(lp, 1.0), lp, atol=1e-12)

    def test_closed_form(self):
        out = np.exp(apply_temperature(np.log([0.8, 0.2]), 2.0))
        np.testing.assert_allclose(out, [2 / 3, 1 / 3], atol=1e-12)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            apply_temperature(np.log([0.5, 0.5]), 0.0)

    @given(logits, st.floats(0.05, 20))
    def test_matches_logit_temperature(self, z, tau):
        np.testing.assert_allclose(apply_temperature(log_softmax(z), tau), log_softmax(z / tau), atol=1e-9)

    @given(logits, st.floats(0.05, 20))
    def test_preserves_argmax_and_normalization(self, z, tau):
        lp = log_softmax(z)
        out = apply_temperature(lp, tau)
        assert abs(np.logaddexp.reduce(out)) < 1e-9
        top = np.flatnonzero(lp == lp.max())
        assert int(np.argmax(out)) in top

    def test_zero_probabilities_stay_zero(self):
        with np.errstate(divide="ignore"):
            lp = np.log([0.7, 0.3, 0.0])
        assert apply_temperature(lp, 3.0)[2] == -np.inf


class TestLengthTerms:
    def test_normalized(self):
        assert length_normalized(-10, 5) == -2
        assert length_normalized(-3.7, 1) == -3.7

    def test_normalized_zero_length(self):
        with pytest.raises(ValueError):
            length_normalized(-1.0, 0)

    def test_normalization_flips_ranking(self):
        short, long = (-4, 2), (-5, 5)
        assert short[0] > long[0]
        assert length_normalized(*long) > length_normalized(*short)

    def test_bonus(self):
        assert length_bonus(-10, 5, 0.5) == -7.5
        assert length_bonus(-10, 5, 0.0) == -10

    def test_bonus_prefers_longer_at_equal_per_token_logprob(self):
        per_token = -0.3
        scores = [length_bonus(per_token * n, n, 0.4) for n in range(1, 8)]
        assert scores == sorted(scores) and len(set(scores)) == len(scores)

    def test_window_formula(self):
        assert length_window(10, 2, 0.1) == (9, 12)

    def test_window_degenerate(self):
        assert length_window(1, 0, 0) == (1, 1)

    def test_window_small_source_uses_delta(self):
        assert length_window(2, 3, 0.5) == (1, 5)


class TestCoverage:
    def test_identity_zero(self):
        assert coverage_penalty(np.eye(3)) == 0.0

    def test_half_column(self):
        A = np.array([[1.0, 0.0], [0.5, 0.5]])  # column sums 1.5 -> 1, 0.5
        assert coverage_penalty(A) == pytest.approx(math.log(0.5), abs=1e-12)
        assert coverage_penalty(A) == pytest.approx(-0.693147, abs=1e-6)

    def test_zero_column_clamped(self):
        A = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert coverage_penalty(A, 1e-10) == pytest.approx(math.log(1e-10), abs=1e-12)
        assert coverage_penalty(A, 1e-10) == pytest.approx(-23.0259, abs=1e-3)

    def test_empty(self):
        assert coverage_penalty(np.zeros((0, 3))) == 0.0
        assert coverage_penalty(AttentionMatrix.from_rows([], 3)) == 0.0

    @settings(max_examples=80)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_nonpositive_and_zero_iff_covered(self, T, S, seed):
        A = np.random.default_rng(seed).dirichlet(np.full(S, 0.3), size=T)
        cp = coverage_penalty(A)
        assert cp <= 0
        assert (cp == 0) == bool(np.all(A.sum(axis=0) >= 1.0))


class TestRepetition:
    def test_monotone_attention_never_penalized(self):
        for theta in (0.1, 0.5, 1.0):
            assert repetition_penalty(onehots(range(6), 6), theta, 3.0) == 0.0

    def test_one_return_event(self):
        assert repetition_penalty(onehots([0, 1, 0], 2), 0.5, 2.0) == -2.0

    def test_dwelling_is_not_a_return(self):
        assert repetition_penalty(onehots([0, 0, 1, 1], 2), 0.5, 2.0) == 0.0

    def test_each_return_charged(self):
        assert repetition_penalty(onehots([0, 1, 0, 1, 0], 2), 0.5, 1.5) == -4.5

    def test_below_threshold_rows_charge_nothing(self):
        rows = [[1, 0, 0], [0, 1, 0], [0.4, 0.3, 0.3], [0, 1, 0]]
        # the diffuse row breaks the "previous position", so returning to column 1 counts
        assert repetition_penalty(rows, 0.5, 1.0) == -1.0
        assert repetition_penalty(rows[:3], 0.5, 1.0) == 0.0

    def test_zero_penalty(self):
        assert repetition_penalty(onehots([0, 1, 0, 1], 2), 0.5, 0.0) == 0.0

    def test_incremental_state(self):
        returned, state = repetition_step(RepetitionState(), [0.9, 0.1], 0.5)
        assert not returned and state == RepetitionState(frozenset({0}), 0)


class TestSibling:
    def test_zero_gamma(self):
        np.testing.assert_array_equal(sibling_penalty(np.log([0.2, 0.5, 0.3]), 0.0), 0.0)

    def test_ranks(self):
        adj = sibling_penalty(np.log([0.5, 0.3, 0.2]), 0.5)
        np.testing.assert_array_equal(adj, [0.0, -0.5, -1.0])

    def test_ties_by_token_id(self):
        adj = sibling_penalty(np.log([0.25, 0.5, 0.25]), 1.0)
        np.testing.assert_array_equal(adj, [-1.0, 0.0, -2.0])


class TestFinalScore:
    rows = ((1.0, 0.0), (1.0, 0.0))

    def test_identity(self):
        assert final_score(-3.0, 2, self.rows, ScoreConfig()) == -3.0

    def test_components(self):
        cp = math.log(1e-10)
        assert final_score(-3.0, 2, self.rows, ScoreConfig(length_normalize=True)) == -1.5
        assert final_score(-3.0, 2, self.rows, ScoreConfig(length_bonus=0.25)) == -2.5
        assert final_score(-3.0, 2, self.rows, ScoreConfig(coverage_weight=2.0)) == pytest.approx(-3.0 + 2 * cp)
