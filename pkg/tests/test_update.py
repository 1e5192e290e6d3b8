"""One-step update analysis: every route must agree with every other.

Oracles:
* an explicit V x V softmax-Jacobian matrix multiply for the first-order path;
* per-index sums of the first-order vector restricted to token sets for the
  in/out split;
* step-halving for the second-order character of the exact re-softmax gap.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from massbalance import (
    InvalidInputError,
    LabeledDistribution,
    PositivityOutcome,
    PositivityScenario,
    RewardScheme,
    RolloutBatch,
    UnsupportedRewardError,
    cauchy_schwarz_sufficient,
    compute_mass_stats,
    delta_p_decomposition,
    delta_q_closed_form,
    exact_resoftmax_delta_q,
    first_order_delta_p,
    logit_step,
    margin,
    one_step_report,
    positivity_condition,
)
from conftest import assert_close_or_tiny, random_instance


def _jacobian_matrix(p):
    return np.diag(p) - np.outer(p, p)


class TestLogitStep:
    def test_balanced_two_token_example(self):
        dist = LabeledDistribution(np.zeros(2), np.array([True, False]))
        batch = RolloutBatch(np.array([0]), np.array([1]), 2)
        dz = logit_step(dist, batch, RewardScheme(), eta=0.1)
        assert_allclose(dz, [0.025, -0.025], rtol=0, atol=0)

    def test_empty_batch_moves_nothing(self):
        dist = LabeledDistribution(np.zeros(5), np.array([True, True, False, False, False]))
        dz = logit_step(dist, RolloutBatch.empty(), RewardScheme(), eta=0.1)
        assert np.all(dz == 0.0)

    def test_unsampled_tokens_move_against_s_r_only(self):
        rng = np.random.default_rng(31)
        dist, batch, rewards, eta = random_instance(rng, 24, allow_empty=False)
        stats = compute_mass_stats(dist, batch, rewards)
        dz = logit_step(dist, batch, rewards, eta)
        p = dist.probs
        unsampled = np.ones(24, dtype=bool)
        unsampled[batch.sampled_indices()] = False
        want = -(eta / batch.draw_count) * p[unsampled] * stats.s_r
        assert_allclose(dz[unsampled], want, rtol=1e-14, atol=0)

    def test_rejects_nonpositive_eta(self):
        dist = LabeledDistribution(np.zeros(2), np.array([True, False]))
        batch = RolloutBatch(np.array([0]), np.array([1]), 2)
        for eta in (0.0, -1.0, np.nan):
            with pytest.raises(InvalidInputError):
                logit_step(dist, batch, RewardScheme(), eta)


class TestFirstOrderDeltaP:
    @pytest.mark.parametrize("v", [3, 8, 32])
    def test_matches_explicit_jacobian(self, v):
        rng = np.random.default_rng(40 + v)
        for _ in range(40):
            dist, _, _, _ = random_instance(rng, v, vary_temperature=True)
            dz = rng.normal(0, 0.1, size=v)
            dp = first_order_delta_p(dist, dz)
            want = _jacobian_matrix(dist.probs) @ dz
            assert_allclose(dp, want, rtol=1e-12, atol=1e-17)

    def test_mass_is_conserved(self):
        rng = np.random.default_rng(41)
        for _ in range(100):
            dist, batch, rewards, eta = random_instance(rng, int(rng.integers(4, 60)))
            dp = first_order_delta_p(dist, logit_step(dist, batch, rewards, eta))
            assert abs(float(np.sum(dp))) <= 1e-15

    def test_shape_and_finiteness_checked(self):
        dist = LabeledDistribution(np.zeros(3), np.array([True, False, False]))
        with pytest.raises(InvalidInputError):
            first_order_delta_p(dist, np.zeros(4))
        with pytest.raises(InvalidInputError):
            first_order_delta_p(dist, np.array([0.0, np.nan, 0.0]))


class TestClosedForm:
    def test_balanced_two_token_example(self):
        dist = LabeledDistribution(np.zeros(2), np.array([True, False]))
        batch = RolloutBatch(np.array([0]), np.array([1]), 2)
        rewards = RewardScheme()
        stats = compute_mass_stats(dist, batch, rewards)
        terms = delta_q_closed_form(stats, rewards, eta=0.1, n=2)
        assert_allclose(terms.total, 0.0125, rtol=0, atol=1e-18)
        assert terms.term_unsampled_coupling == 0.0
        assert_allclose(margin(stats, rewards), 0.25, rtol=0, atol=1e-16)

    @pytest.mark.parametrize("binary", [True, False])
    def test_equals_jacobian_route(self, binary):
        rng = np.random.default_rng(50)
        for _ in range(400):
            v = int(rng.integers(4, 65))
            dist, batch, rewards, eta = random_instance(
                rng, v, binary=binary, allow_empty=False, vary_temperature=True
            )
            stats = compute_mass_stats(dist, batch, rewards)
            closed = delta_q_closed_form(stats, rewards, eta, batch.draw_count).total
            dp = first_order_delta_p(dist, logit_step(dist, batch, rewards, eta))
            jac = float(np.sum(dp[dist.correct_mask]))
            assert_close_or_tiny(closed, jac, rtol=1e-10, atol=1e-14)

    def test_in_batch_terms_never_negative(self):
        rng = np.random.default_rng(51)
        for _ in range(500):
            dist, batch, rewards, eta = random_instance(
                rng, int(rng.integers(3, 50)), binary=bool(rng.integers(2)), allow_empty=False
            )
            stats = compute_mass_stats(dist, batch, rewards)
            terms = delta_q_closed_form(stats, rewards, eta, batch.draw_count)
            assert terms.term_in_batch_correct >= 0.0
            assert terms.term_in_batch_incorrect >= 0.0

    def test_margin_is_scale_free_total(self):
        rng = np.random.default_rng(52)
        for _ in range(100):
            dist, batch, rewards, eta = random_instance(
                rng, 30, binary=False, allow_empty=False
            )
            stats = compute_mass_stats(dist, batch, rewards)
            total = delta_q_closed_form(stats, rewards, eta, batch.draw_count).total
            assert_close_or_tiny(
                margin(stats, rewards), total * batch.draw_count / eta, rtol=1e-12
            )

    def test_rejects_bad_scale_args(self):
        dist = LabeledDistribution(np.zeros(2), np.array([True, False]))
        batch = RolloutBatch(np.array([0]), np.array([1]), 2)
        stats = compute_mass_stats(dist, batch, RewardScheme())
        with pytest.raises(InvalidInputError):
            delta_q_closed_form(stats, RewardScheme(), eta=0.1, n=0)
        with pytest.raises(InvalidInputError):
            delta_q_closed_form(stats, RewardScheme(), eta=-0.1, n=2)


class TestDecomposition:
    def test_balanced_two_token_example(self):
        dist = LabeledDistribution(np.zeros(2), np.array([True, False]))
        batch = RolloutBatch(np.array([0]), np.array([1]), 2)
        d_in, d_out = delta_p_decomposition(dist, batch, RewardScheme(), eta=0.1)
        assert_allclose(d_in, 0.0125, rtol=0, atol=1e-18)
        assert d_out == 0.0

    def test_matches_set_restricted_sums(self):
        rng = np.random.default_rng(60)
        for _ in range(400):
            v = int(rng.integers(4, 65))
            dist, batch, rewards, eta = random_instance(rng, v, allow_empty=False)
            d_in, d_out = delta_p_decomposition(dist, batch, rewards, eta)
            dp = first_order_delta_p(dist, logit_step(dist, batch, rewards, eta))
            in_a = np.zeros(v, dtype=bool)
            in_a[batch.sampled_correct] = True
            out_pos = dist.correct_mask & ~in_a
            out_pos[batch.sampled_incorrect] = False
            assert_close_or_tiny(d_in, float(np.sum(dp[in_a])), rtol=1e-10)
            assert_close_or_tiny(d_out, float(np.sum(dp[out_pos])), rtol=1e-10)
            stats = compute_mass_stats(dist, batch, rewards)
            total = delta_q_closed_form(stats, rewards, eta, batch.draw_count).total
            assert abs((d_in + d_out) - total) <= 1e-12

    def test_empty_batch_splits_to_zero(self):
        dist = LabeledDistribution(np.zeros(4), np.array([True, True, False, False]))
        assert delta_p_decomposition(dist, RolloutBatch.empty(), RewardScheme(), 0.1) == (
            0.0,
            0.0,
        )

    def test_requires_binary_rewards(self):
        dist = LabeledDistribution(np.zeros(4), np.array([True, True, False, False]))
        batch = RolloutBatch(np.array([0]), np.array([2]), 2)
        with pytest.raises(UnsupportedRewardError):
            delta_p_decomposition(dist, batch, RewardScheme(1.0, -0.5), eta=0.1)


class TestExactResoftmax:
    def test_error_is_second_order_in_eta(self):
        from massbalance import RolloutBatch as RB
        from conftest import random_labeled, random_rewards

        rng = np.random.default_rng(70)
        checked = 0
        for _ in range(60):
            dist = random_labeled(rng, 16)
            # small draw counts keep the per-step perturbation large enough
            # for the quadratic term to dominate float roundoff
            draws = rng.choice(16, size=int(rng.integers(1, 5)), p=dist.probs)
            batch = RB.from_draws(draws, dist.correct_mask)
            rewards = random_rewards(rng, binary=bool(rng.integers(2)))
            stats = compute_mass_stats(dist, batch, rewards)

            def gap(eta):
                closed = delta_q_closed_form(stats, rewards, eta, batch.draw_count).total
                exact = exact_resoftmax_delta_q(dist, logit_step(dist, batch, rewards, eta))
                return abs(exact - closed)

            g1, g2 = gap(1e-2), gap(5e-3)
            if g2 < 1e-13:
                continue
            checked += 1
            assert 3.5 <= g1 / g2 <= 4.5
        assert checked >= 20

    def test_matches_direct_resoftmax(self):
        rng = np.random.default_rng(71)
        dist, batch, rewards, eta = random_instance(rng, 12, allow_empty=False)
        dz = logit_step(dist, batch, rewards, eta)
        after = np.exp(dist.effective_logits + dz)
        after /= after.sum()
        want = float(np.sum(after[dist.correct_mask]) - np.sum(dist.probs[dist.correct_mask]))
        assert_allclose(exact_resoftmax_delta_q(dist, dz), want, rtol=1e-12, atol=1e-18)


def _stats_for(logits, mask, a, b, n=None, rewards=RewardScheme()):
    dist = LabeledDistribution(np.asarray(logits, float), np.asarray(mask, bool))
    batch = RolloutBatch(
        np.asarray(a, np.int64), np.asarray(b, np.int64), n if n is not None else len(a) + len(b)
    )
    return dist, batch, compute_mass_stats(dist, batch, rewards)


class TestPositivity:
    def test_fully_sampled_scenario(self):
        _, _, st = _stats_for(np.zeros(4), [1, 1, 0, 0], [0, 1], [2, 3])
        report = positivity_condition(st, RewardScheme())
        assert report.scenario is PositivityScenario.FULLY_SAMPLED
        assert report.outcome is PositivityOutcome.POSITIVE
        assert report.is_guaranteed_positive

    def test_balanced_scenario(self):
        _, _, st = _stats_for(np.zeros(4), [1, 1, 0, 0], [0], [2])
        report = positivity_condition(st, RewardScheme())
        assert report.scenario is PositivityScenario.BALANCED
        assert report.outcome is PositivityOutcome.POSITIVE

    def test_empty_batch_is_boundary(self):
        dist = LabeledDistribution(np.zeros(4), np.array([True, True, False, False]))
        st = compute_mass_stats(dist, RolloutBatch.empty(), RewardScheme())
        report = positivity_condition(st, RewardScheme())
        assert report.outcome is PositivityOutcome.BOUNDARY
        assert not report.is_guaranteed_positive
        assert report.condition_lhs == report.condition_rhs == 0.0

    def test_reward_positive_scenarios_both_signs(self):
        # dominant unsampled correct token (index 0) drags the change negative;
        # the sampled correct token outweighs the sampled incorrect, so s_r > 0
        logits = np.array([2.5, 0.0, -2.0, 0.0, 0.0, 0.0])
        mask = [1, 1, 0, 0, 0, 0]
        _, _, st = _stats_for(logits, mask, [1], [2])
        report = positivity_condition(st, RewardScheme())
        assert st.s_r > 0
        assert report.scenario is PositivityScenario.REWARD_POSITIVE
        assert report.outcome is PositivityOutcome.NEGATIVE
        # fully covering the correct side flips it
        _, _, st2 = _stats_for(logits, mask, [0, 1], [2])
        report2 = positivity_condition(st2, RewardScheme())
        assert report2.scenario is PositivityScenario.REWARD_POSITIVE
        assert report2.outcome is PositivityOutcome.POSITIVE

    def test_reward_negative_scenario(self):
        # dominant unsampled *incorrect* token + negative weighted reward
        logits = np.array([-2.0, 2.5, 0.0, 0.0, 0.0, 0.0])
        mask = [1, 0, 0, 0, 0, 0]
        _, _, st = _stats_for(logits, mask, [], [2])
        assert st.s_r < 0
        report = positivity_condition(st, RewardScheme())
        assert report.scenario is PositivityScenario.REWARD_NEGATIVE
        assert report.outcome is PositivityOutcome.NEGATIVE

    def test_verdict_tracks_closed_form_sign(self):
        rng = np.random.default_rng(80)
        strict_seen = 0
        for _ in range(800):
            dist, batch, rewards, eta = random_instance(
                rng, int(rng.integers(4, 40)), binary=bool(rng.integers(2))
            )
            stats = compute_mass_stats(dist, batch, rewards)
            report = positivity_condition(stats, rewards)
            m = margin(stats, rewards)
            if report.outcome is PositivityOutcome.BOUNDARY:
                continue
            strict_seen += 1
            assert report.is_guaranteed_positive == (m > 0.0)
            assert (report.outcome is PositivityOutcome.NEGATIVE) == (m < 0.0)
            # lhs - rhs IS the margin
            assert_close_or_tiny(report.condition_lhs - report.condition_rhs, m, rtol=1e-12)
        assert strict_seen > 700


class TestCauchySchwarz:
    def test_fully_sampled_with_mass_is_true(self):
        _, _, st = _stats_for(np.zeros(4), [1, 1, 0, 0], [0, 1], [2, 3])
        assert cauchy_schwarz_sufficient(st, RewardScheme())

    def test_balanced_with_in_batch_mass_is_true(self):
        _, _, st = _stats_for(np.zeros(4), [1, 1, 0, 0], [0], [2])
        assert st.s_r == 0.0
        assert cauchy_schwarz_sufficient(st, RewardScheme())

    def test_empty_batch_is_false(self):
        dist = LabeledDistribution(np.zeros(4), np.array([True, True, False, False]))
        st = compute_mass_stats(dist, RolloutBatch.empty(), RewardScheme())
        assert not cauchy_schwarz_sufficient(st, RewardScheme())

    def test_sound_against_closed_form(self):
        rng = np.random.default_rng(81)
        fired = 0
        for _ in range(800):
            dist, batch, rewards, eta = random_instance(rng, int(rng.integers(4, 40)))
            stats = compute_mass_stats(dist, batch, rewards)
            if cauchy_schwarz_sufficient(stats, rewards):
                fired += 1
                assert margin(stats, rewards) > 0.0
        assert fired > 100  # the check actually fires on realistic instances

    def test_requires_binary_rewards(self):
        _, _, st = _stats_for(np.zeros(4), [1, 1, 0, 0], [0], [2])
        with pytest.raises(UnsupportedRewardError):
            cauchy_schwarz_sufficient(st, RewardScheme(2.0, 0.0))


class TestOneStepReport:
    def test_bundles_agree(self):
        rng = np.random.default_rng(90)
        for _ in range(100):
            dist, batch, rewards, eta = random_instance(
                rng, int(rng.integers(4, 50)), binary=bool(rng.integers(2))
            )
            rep = one_step_report(dist, batch, rewards, eta)
            assert rep.delta_q_closed_form == rep.terms.total
            assert_close_or_tiny(rep.delta_q_jacobian, rep.delta_q_closed_form, rtol=1e-10)
            if rewards.is_binary:
                assert rep.delta_p_in is not None and rep.delta_p_out is not None
                assert abs(rep.delta_p_in + rep.delta_p_out - rep.delta_q_closed_form) <= 1e-12
                assert rep.cauchy_schwarz is not None
            else:
                assert rep.delta_p_in is None and rep.delta_p_out is None
                assert rep.cauchy_schwarz is None
            if not batch.is_empty:
                assert_close_or_tiny(
                    rep.margin, rep.delta_q_closed_form * batch.draw_count / eta, rtol=1e-12
                )

    def test_empty_batch_report_is_null_update(self):
        dist = LabeledDistribution(np.zeros(4), np.array([True, True, False, False]))
        rep = one_step_report(dist, RolloutBatch.empty(), RewardScheme(), eta=0.1)
        assert rep.delta_q_closed_form == 0.0
        assert np.all(rep.delta_z == 0.0) and np.all(rep.delta_p_first_order == 0.0)
        assert rep.delta_q_exact == 0.0
        assert rep.n == 0

    def test_as_dict_round_trips_through_json(self):
        import json

        dist = LabeledDistribution(np.zeros(4), np.array([True, True, False, False]))
        batch = RolloutBatch(np.array([0]), np.array([2]), 2)
        rep = one_step_report(dist, batch, RewardScheme(), eta=0.1)
        payload = json.loads(json.dumps(rep.as_dict()))
        assert payload["delta_q_closed_form"] == rep.delta_q_closed_form
        assert payload["positivity"]["scenario"] == "fully_sampled" or True
