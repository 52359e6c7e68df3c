"""Knowledge-tracing HMM: predictions, posteriors, EM fitting, evaluation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_question
from lbkt.bkt import (
    BktParams,
    FitResult,
    evaluate_last_n,
    fit_em,
    fit_per_skill,
    posterior_update,
    predict_correct_prob,
    sequence_log_likelihood,
    skill_sequences,
)
from lbkt.students import Interaction, Operator, Trajectory
from oracles import bkt_enumerate_likelihood, bkt_step

REF = BktParams(p_init=0.5, p_learn=0.1, p_guess=0.2, p_slip=0.1)


class TestSingleStep:
    def test_predict_correct_prob(self):
        assert predict_correct_prob(0.5, REF) == pytest.approx(0.55)
        assert predict_correct_prob(0.0, REF) == pytest.approx(0.2)
        assert predict_correct_prob(1.0, REF) == pytest.approx(0.9)

    def test_frozen_correct_update(self):
        # Bayes: 0.45 / 0.55 = 0.818182; learn: + (1 - post) * 0.1 = 0.836364.
        updated = posterior_update(0.5, True, REF)
        assert updated == pytest.approx(0.8363636363636364, abs=1e-9)

    def test_frozen_incorrect_update(self):
        # Bayes: 0.05 / 0.45 = 0.111111; learn: 0.2.
        updated = posterior_update(0.5, False, REF)
        assert updated == pytest.approx(0.2, abs=1e-9)

    @given(
        st.floats(0.01, 0.99),
        st.booleans(),
        st.floats(0.01, 0.5),
        st.floats(0.01, 0.45),
        st.floats(0.01, 0.45),
    )
    def test_matches_fraction_oracle(self, p, correct, learn, guess, slip):
        params = BktParams(p_init=0.5, p_learn=learn, p_guess=guess, p_slip=slip)
        expected, _ = bkt_step(p, correct, learn, guess, slip)
        assert posterior_update(p, correct, params) == pytest.approx(
            float(expected), abs=1e-12
        )

    def test_mastery_is_absorbing(self):
        p = 1.0
        for obs in (True, True, False, True):
            p = posterior_update(p, obs, BktParams(0.5, 0.1, 0.2, 0.1))
        assert p == pytest.approx(1.0)

    def test_zero_probability_observation(self):
        certain = BktParams(p_init=1.0, p_learn=0.0, p_guess=0.0, p_slip=0.0)
        with pytest.raises(ValueError, match="zero probability"):
            posterior_update(1.0, False, certain)
        with pytest.raises(ValueError, match="zero probability"):
            sequence_log_likelihood([True, False], certain)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            BktParams(1.5, 0.1, 0.2, 0.1)
        with pytest.raises(ValueError):
            posterior_update(-0.1, True, REF)


class TestLikelihood:
    @given(
        st.lists(st.booleans(), min_size=1, max_size=12),
        st.floats(0.05, 0.95),
        st.floats(0.01, 0.5),
        st.floats(0.01, 0.45),
        st.floats(0.01, 0.45),
    )
    @settings(max_examples=60, deadline=None)
    def test_forward_matches_path_enumeration(self, obs, p_init, learn, guess, slip):
        """Forward recursion equals the exact sum over all 2^T latent paths."""
        params = BktParams(p_init=p_init, p_learn=learn, p_guess=guess, p_slip=slip)
        exact = bkt_enumerate_likelihood(obs, p_init, learn, guess, slip)
        assert math.exp(sequence_log_likelihood(obs, params)) == pytest.approx(
            exact, abs=1e-10
        )

    def test_frozen_two_step_value(self):
        # P(correct) = 0.55; then posterior 0.836364 gives P(correct) = 0.785455.
        ll = sequence_log_likelihood([True, True], REF)
        assert math.exp(ll) == pytest.approx(0.55 * 0.7854545454545454, abs=1e-12)


TRUE = BktParams(p_init=0.3, p_learn=0.1, p_guess=0.2, p_slip=0.1)


def simulate_sequences(params, n, t, rng):
    """Independent generative reference for fitting tests: emit, then learn."""
    seqs = []
    for _ in range(n):
        mastered = rng.random() < params.p_init
        seq = []
        for _ in range(t):
            if mastered:
                seq.append(bool(rng.random() >= params.p_slip))
            else:
                seq.append(bool(rng.random() < params.p_guess))
                if rng.random() < params.p_learn:
                    mastered = True
        seqs.append(seq)
    return seqs


class TestFitEm:
    def test_recovers_generating_parameters(self):
        rng = np.random.default_rng(0)
        seqs = simulate_sequences(TRUE, 1000, 50, rng)
        fit = fit_em(seqs, init=BktParams(0.5, 0.2, 0.25, 0.15))
        assert fit.converged
        for name in ("p_init", "p_learn", "p_guess", "p_slip"):
            assert getattr(fit.params, name) == pytest.approx(
                getattr(TRUE, name), abs=0.05
            ), name

    def test_log_likelihood_non_decreasing(self):
        rng = np.random.default_rng(7)
        seqs = simulate_sequences(TRUE, 200, 20, rng)
        fit = fit_em(seqs)
        deltas = np.diff(fit.log_likelihoods)
        assert np.all(deltas >= -1e-9)

    def test_fit_improves_over_init(self):
        rng = np.random.default_rng(3)
        seqs = simulate_sequences(TRUE, 300, 25, rng)
        init = BktParams(0.5, 0.2, 0.25, 0.15)
        fit = fit_em(seqs, init=init)
        baseline = sum(sequence_log_likelihood(s, init) for s in seqs)
        fitted = sum(sequence_log_likelihood(s, fit.params) for s in seqs)
        assert fitted > baseline

    def test_ragged_lengths_match_per_sequence_likelihood(self):
        rng = np.random.default_rng(5)
        seqs = [
            simulate_sequences(TRUE, 1, t, rng)[0] for t in (3, 8, 1, 12, 5)
        ]
        fit = fit_em(seqs, max_iterations=1)
        init = BktParams(0.5, 0.2, 0.25, 0.15)
        expected = sum(sequence_log_likelihood(s, init) for s in seqs)
        # Clamping cannot move these interior parameters.
        assert fit.log_likelihoods[0] == pytest.approx(expected, abs=1e-8)

    def test_degenerate_all_correct(self):
        fit = fit_em([[True] * 10] * 20)
        assert fit.converged
        p = fit.params
        assert 0.0 < p.p_guess < 1.0 and 0.0 < p.p_slip < 1.0
        assert np.isfinite(fit.log_likelihoods).all()
        # The fit should consider these students near-certain performers.
        assert predict_correct_prob(p.p_init, p) > 0.9

    def test_identifiability_guard(self):
        rng = np.random.default_rng(11)
        seqs = simulate_sequences(TRUE, 100, 15, rng)
        # A label-swapped start: guessing and slipping sum past certainty.
        fit = fit_em(seqs, init=BktParams(0.5, 0.2, 0.85, 0.4))
        assert fit.params.p_guess + fit.params.p_slip < 1.0

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            fit_em([])
        with pytest.raises(ValueError):
            fit_em([[True], []])


def grouped_fixture():
    bank = {
        "a1": make_question(Operator.ADD, 1, 2, qid="a1"),
        "a2": make_question(Operator.ADD, 3, 4, qid="a2"),
        "m1": make_question(Operator.MUL, 2, 3, qid="m1"),
    }
    trajectories = [
        Trajectory(
            student_id="s1",
            interactions=[
                Interaction(question_id="a1", given_answer=3, correct=True),
                Interaction(question_id="m1", given_answer=6, correct=True),
                Interaction(question_id="a2", given_answer=0, correct=False),
            ],
        ),
        Trajectory(
            student_id="s2",
            interactions=[
                Interaction(question_id="unknown", given_answer=0, correct=False),
                Interaction(question_id="a1", given_answer=3, correct=True),
            ],
        ),
    ]
    return bank, trajectories


class TestSkillGrouping:
    def test_sequences_grouped_by_construct(self):
        bank, trajectories = grouped_fixture()
        groups = skill_sequences(trajectories, bank)
        assert groups["add"] == [[True, False], [True]]
        assert groups["mul"] == [[True]]
        # Questions missing from the bank fall into a catch-all skill.
        assert groups["all"] == [[False]]

    def test_fit_per_skill_covers_all_groups(self):
        bank, trajectories = grouped_fixture()
        results = fit_per_skill(trajectories, bank, max_iterations=3)
        assert set(results) == {"add", "mul", "all"}
        assert all(isinstance(r, FitResult) for r in results.values())


class TestEvaluateLastN:
    def test_confident_params_predict_perfectly(self):
        bank, _ = grouped_fixture()
        trajectory = Trajectory(
            student_id="s",
            interactions=[
                Interaction(question_id="a1", given_answer=3, correct=True)
                for _ in range(6)
            ],
        )
        params = {"add": BktParams(0.9, 0.1, 0.2, 0.1)}
        assert evaluate_last_n([trajectory], bank, params, n=2) == 1.0

    def test_rolls_state_before_predicting(self):
        bank, _ = grouped_fixture()
        # Weak prior, strong evidence: early correct answers must lift the
        # state used for the later predictions.
        interactions = [
            Interaction(question_id="a1", given_answer=3, correct=True)
            for _ in range(10)
        ]
        trajectory = Trajectory(student_id="s", interactions=interactions)
        params = {"add": BktParams(0.05, 0.05, 0.1, 0.05)}
        assert evaluate_last_n([trajectory], bank, params, n=3) == 1.0

    def test_no_predictions_rejected(self):
        with pytest.raises(ValueError, match="no predictions"):
            evaluate_last_n([], {}, {}, n=4)
