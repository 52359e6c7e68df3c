"""Accuracy scoring, the misconception-mention flag and the composite reward."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lbkt.pipeline import Bottleneck, PredictionSet
from lbkt.rewards import (
    RewardWeights,
    accuracy,
    length_penalty,
    omega,
    phi_reward,
)
from lbkt.students import Interaction


class TestAccuracy:
    def test_counts_matches(self):
        preds = {"a": "yes", "b": "no", "c": "yes", "d": "no"}
        truth = {"a": True, "b": True, "c": False, "d": False}
        result = accuracy(preds, truth)
        assert result == (0.5, 4, False)

    def test_accepts_prediction_set_and_interactions(self):
        preds = PredictionSet(predictions={"q1": "yes"})
        truth = [Interaction(question_id="q1", given_answer=3, correct=True)]
        assert accuracy(preds, truth).value == 1.0

    def test_abstention_never_matches(self):
        assert accuracy({"a": None}, {"a": True}).value == 0.0
        assert accuracy({"a": None}, {"a": False}).value == 0.0

    def test_empty_is_vacuous(self):
        result = accuracy({}, {})
        assert result.value == 1.0 and result.n == 0 and result.vacuous

    def test_id_mismatch_rejected(self):
        with pytest.raises(ValueError, match="!="):
            accuracy({"a": "yes"}, {"b": True})
        with pytest.raises(ValueError):
            accuracy({"a": "yes", "b": "no"}, {"a": True})


class TestOmega:
    @pytest.mark.parametrize(
        "text,flag",
        [
            ("No misconceptions observed.", 1),
            ("Misconceptions: none.", 1),
            ("One misconception stands out.", 1),
            ("MISCONCEPTION", 1),
            ("misconceptionX", 0),
            ("premisconception", 0),
            ("The student confuses carrying.", 0),
            ("", 0),
        ],
    )
    def test_word_boundary_match(self, text, flag):
        assert omega(text) == flag

    def test_accepts_bottleneck(self):
        b = Bottleneck(
            text="Misconceptions: none.", token_count=4, budget=8, encoder_id="e"
        )
        assert omega(b) == 1


class TestLengthPenalty:
    def test_zero_up_to_budget(self):
        assert length_penalty(0, 128) == 0.0
        assert length_penalty(128, 128) == 0.0

    def test_linear_overrun(self):
        assert length_penalty(192, 128) == pytest.approx(0.5)
        assert length_penalty(256, 128) == pytest.approx(1.0)


class TestPhi:
    def test_frozen_example_with_omega_bonus(self):
        weights = RewardWeights(w_recon=1, w_pred=1, w_len=1, w_omega=1, budget=128)
        result = phi_reward(0.9, 0.75, 100, 1, weights)
        assert result.total == pytest.approx(2.65)
        assert result.length_penalty == 0.0

    def test_frozen_boundary_example(self):
        weights = RewardWeights(budget=128)
        assert phi_reward(1.0, 1.0, 128, 0, weights).total == pytest.approx(2.0)

    def test_frozen_double_budget_example(self):
        weights = RewardWeights(budget=128)
        result = phi_reward(0.0, 0.0, 256, 0, weights)
        assert result.total == pytest.approx(-1.0)
        assert result.length_penalty == pytest.approx(1.0)

    @given(
        st.floats(0, 1),
        st.floats(0, 1),
        st.integers(0, 400),
        st.floats(0.01, 3),
    )
    def test_omega_bonus_is_exactly_w_omega(self, recon, pred, length, w):
        base = RewardWeights(w_omega=w)
        with_flag = phi_reward(recon, pred, length, 1, base).total
        without = phi_reward(recon, pred, length, 0, base).total
        assert with_flag - without == pytest.approx(w)

    @given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 128))
    def test_no_penalty_within_budget(self, recon, pred, length):
        result = phi_reward(recon, pred, length, 0, RewardWeights(budget=128))
        assert result.length_penalty == 0.0
        assert result.total == pytest.approx(recon + pred)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            phi_reward(1.5, 0.0, 10, 0)
        with pytest.raises(ValueError):
            phi_reward(0.0, -0.1, 10, 0)
        with pytest.raises(ValueError):
            phi_reward(0.0, 0.0, -1, 0)
        with pytest.raises(ValueError):
            phi_reward(0.0, 0.0, 10, 2)
        with pytest.raises(ValueError):
            RewardWeights(budget=0)
