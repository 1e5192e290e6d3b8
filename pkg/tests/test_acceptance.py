"""End-to-end acceptance gate.

Each test here is one headline guarantee, run at full advertised scale and
tolerance; the terminal summary prints one PASS/FAIL line per guarantee
(see conftest).  Module-level test files cover the same ground at finer
granularity — this file is the single place that answers "does the package
do what it promises" in one run.
"""

import json
import time

import numpy as np
import pytest

from massbalance import (
    ControllerConfig,
    LabeledDistribution,
    RewardScheme,
    RolloutBatch,
    cauchy_schwarz_sufficient,
    compute_mass_stats,
    delta_p_decomposition,
    decay_curve,
    delta_q_closed_form,
    desk_preset,
    exact_resoftmax_delta_q,
    expected_unsampled_second_moment,
    first_order_delta_p,
    logit_step,
    positivity_condition,
    run_controller,
    sweep_rollout_sizes,
)
from massbalance.cli import main
from conftest import random_labeled, random_batch, random_rewards

VOCAB_CHOICES = (8, 64, 256)
INSTANCES = 10_500


def _instance(rng, binary):
    v = int(rng.choice(VOCAB_CHOICES))
    dist = random_labeled(rng, v)
    batch = random_batch(rng, dist, allow_empty=False)
    rewards = random_rewards(rng, binary=binary)
    eta = float(rng.uniform(1e-4, 1e-1))
    return dist, batch, rewards, eta


def _assert_equivalence(closed, oracle):
    if abs(closed) < 1e-14 and abs(oracle) < 1e-14:
        return
    assert abs(closed - oracle) <= 1e-10 * max(abs(closed), abs(oracle)), (
        f"closed={closed!r} oracle={oracle!r}"
    )


class TestAcceptance:
    def test_closed_form_equivalence_binary(self):
        """closed form equals Jacobian-route mass change (binary rewards, 10500 instances, 1e-10 rel)"""
        rng = np.random.default_rng(20_001)
        start = time.perf_counter()
        for _ in range(INSTANCES):
            dist, batch, rewards, eta = _instance(rng, binary=True)
            stats = compute_mass_stats(dist, batch, rewards)
            closed = delta_q_closed_form(stats, rewards, eta, batch.draw_count).total
            dz = logit_step(dist, batch, rewards, eta)
            oracle = float(np.sum(first_order_delta_p(dist, dz)[dist.correct_mask]))
            _assert_equivalence(closed, oracle)
        assert time.perf_counter() - start < 60.0

    def test_closed_form_equivalence_general_rewards(self):
        """closed form equals Jacobian route with rewards in [0,2] x [-2,0] (10500 instances, 1e-10 rel)"""
        rng = np.random.default_rng(20_002)
        start = time.perf_counter()
        for _ in range(INSTANCES):
            dist, batch, rewards, eta = _instance(rng, binary=False)
            stats = compute_mass_stats(dist, batch, rewards)
            closed = delta_q_closed_form(stats, rewards, eta, batch.draw_count).total
            dz = logit_step(dist, batch, rewards, eta)
            oracle = float(np.sum(first_order_delta_p(dist, dz)[dist.correct_mask]))
            _assert_equivalence(closed, oracle)
        assert time.perf_counter() - start < 60.0

    def test_in_out_decomposition(self):
        """sampled/unsampled split matches set-restricted sums and re-adds to the total (10500 instances)"""
        rng = np.random.default_rng(20_003)
        for _ in range(INSTANCES):
            dist, batch, rewards, eta = _instance(rng, binary=True)
            d_in, d_out = delta_p_decomposition(dist, batch, rewards, eta)
            dz = logit_step(dist, batch, rewards, eta)
            dp = first_order_delta_p(dist, dz)
            mask = dist.correct_mask
            sampled_correct = np.zeros(dist.vocab_size, dtype=bool)
            sampled_correct[batch.sampled_correct] = True
            oracle_in = float(np.sum(dp[sampled_correct]))
            oracle_out = float(np.sum(dp[mask & ~sampled_correct]))
            _assert_equivalence(d_in, oracle_in)
            _assert_equivalence(d_out, oracle_out)
            stats = compute_mass_stats(dist, batch, rewards)
            total = delta_q_closed_form(stats, rewards, eta, batch.draw_count).total
            _assert_equivalence(d_in + d_out, total)

    def test_second_order_error_scaling(self):
        """halving the step size cuts the closed-form error by 4x within [3.5, 4.5] (100+ instances)"""
        rng = np.random.default_rng(20_004)
        checked = 0
        for _ in range(600):
            dist = random_labeled(rng, 16)
            draws = rng.choice(16, size=int(rng.integers(1, 5)), p=dist.probs)
            batch = RolloutBatch.from_draws(draws, dist.correct_mask)
            rewards = RewardScheme()
            stats = compute_mass_stats(dist, batch, rewards)
            gaps = []
            for eta in (1e-2, 5e-3):
                closed = delta_q_closed_form(stats, rewards, eta, batch.draw_count).total
                dz = logit_step(dist, batch, rewards, eta)
                gaps.append(abs(exact_resoftmax_delta_q(dist, dz) - closed))
            if gaps[1] < 1e-13:  # quadratic term too small to resolve in float64
                continue
            ratio = gaps[0] / gaps[1]
            assert 3.5 <= ratio <= 4.5, f"ratio {ratio}"
            checked += 1
        assert checked >= 100

    def test_in_batch_terms_nonnegative(self):
        """both sampled-set contributions are nonnegative on every random instance (10500, zero violations)"""
        rng = np.random.default_rng(20_005)
        for i in range(INSTANCES):
            dist, batch, rewards, eta = _instance(rng, binary=(i % 2 == 0))
            stats = compute_mass_stats(dist, batch, rewards)
            terms = delta_q_closed_form(stats, rewards, eta, batch.draw_count)
            assert terms.term_in_batch_correct >= 0.0
            assert terms.term_in_batch_incorrect >= 0.0

    def test_positivity_verdicts_and_sufficient_condition(self):
        """sign test matches the realized change in all four regimes; sufficient test never fires on a loss (10500)"""
        rewards = RewardScheme()
        eta, n = 0.1, 2

        # regime 1: every token sampled -> guaranteed gain
        dist = LabeledDistribution(np.zeros(2), np.array([True, False]))
        batch = RolloutBatch(np.array([0]), np.array([1]), 2)
        stats = compute_mass_stats(dist, batch, rewards)
        report = positivity_condition(stats, rewards)
        assert report.scenario.value == "fully_sampled"
        assert report.is_guaranteed_positive
        assert delta_q_closed_form(stats, rewards, eta, n).total > 0.0

        # regime 2: average reward zero -> coupling vanishes, gain
        logits = np.zeros(6)
        mask6 = np.array([True, True, True, False, False, False])
        dist = LabeledDistribution(logits, mask6)
        batch = RolloutBatch(np.array([0]), np.array([3]), 2)
        stats = compute_mass_stats(dist, batch, rewards)
        report = positivity_condition(stats, rewards)
        assert report.scenario.value == "balanced"
        assert report.is_guaranteed_positive
        assert delta_q_closed_form(stats, rewards, eta, n).total > 0.0

        # regime 3: positive average reward, dominant unsampled-correct token
        # drags the total negative; resampling the heavy token flips the sign
        logits = np.array([2.5, 0.0, -2.0, 0.0, 0.0, 0.0])
        dist = LabeledDistribution(logits, np.array([True, True, False, False, False, False]))
        losing = RolloutBatch(np.array([1]), np.array([2]), 2)
        stats = compute_mass_stats(dist, losing, rewards)
        report = positivity_condition(stats, rewards)
        assert report.scenario.value == "reward_positive"
        assert not report.is_guaranteed_positive
        assert delta_q_closed_form(stats, rewards, eta, 2).total < 0.0
        winning = RolloutBatch(np.array([0, 1]), np.array([2]), 3)
        stats = compute_mass_stats(dist, winning, rewards)
        report = positivity_condition(stats, rewards)
        assert report.scenario.value == "reward_positive"
        assert report.is_guaranteed_positive
        assert delta_q_closed_form(stats, rewards, eta, 3).total > 0.0

        # regime 4: negative average reward pushes unsampled tokens up; the
        # sign follows whoever owns the unsampled mass
        mask1 = np.array([True, False, False, False, False, False])
        heavy_incorrect = LabeledDistribution(np.array([-2.0, 2.5, 0.0, 0.0, 0.0, 0.0]), mask1)
        batch = RolloutBatch(np.empty(0, dtype=np.int64), np.array([2]), 1)
        stats = compute_mass_stats(heavy_incorrect, batch, rewards)
        report = positivity_condition(stats, rewards)
        assert report.scenario.value == "reward_negative"
        assert not report.is_guaranteed_positive
        assert delta_q_closed_form(stats, rewards, eta, 1).total < 0.0
        heavy_correct = LabeledDistribution(np.array([2.5, -2.0, 0.0, 0.0, 0.0, 0.0]), mask1)
        stats = compute_mass_stats(heavy_correct, batch, rewards)
        report = positivity_condition(stats, rewards)
        assert report.scenario.value == "reward_negative"
        assert report.is_guaranteed_positive
        assert delta_q_closed_form(stats, rewards, eta, 1).total > 0.0

        # randomized soundness sweep
        rng = np.random.default_rng(20_006)
        fired = 0
        for _ in range(INSTANCES):
            dist, batch, rw, eta_i = _instance(rng, binary=True)
            stats = compute_mass_stats(dist, batch, rw)
            total = delta_q_closed_form(stats, rw, eta_i, batch.draw_count).total
            report = positivity_condition(stats, rw)
            if report.outcome.value == "positive":
                assert total > 0.0
            elif report.outcome.value == "negative":
                assert total < 0.0
            if cauchy_schwarz_sufficient(stats, rw):
                fired += 1
                assert total > 0.0
        assert fired >= 100  # the sufficient test must not be vacuous

    def test_unsampled_mass_monte_carlo(self):
        """analytic per-token unsampled mass within 3 standard errors of 1e6-trial Monte Carlo"""
        rng = np.random.default_rng(20_007)
        trials = 1_000_000
        start = time.perf_counter()
        for p in (0.01, 0.1, 0.3, 0.5, 0.9):
            for n in (1, 4, 16, 64):
                analytic = expected_unsampled_second_moment(p, n)
                missed = rng.binomial(n, p, size=trials) == 0
                miss_rate = float(np.mean(missed))
                estimate = p * p * miss_rate
                se = p * p * np.sqrt(miss_rate * (1.0 - miss_rate) / trials)
                if se == 0.0:
                    # all-or-nothing sample: rule-of-three resolution floor
                    assert abs(estimate - analytic) <= p * p * 3.0 / trials
                else:
                    assert abs(estimate - analytic) <= 3.0 * se, (p, n)
        assert time.perf_counter() - start < 120.0

    def test_unsampled_totals_strictly_decay(self):
        """expected unsampled totals strictly decrease in the rollout count for every tested distribution"""
        rng = np.random.default_rng(20_008)
        grid = [0, 1, 2, 4, 8, 16, 64, 256, 1024]
        for _ in range(200):
            dist = random_labeled(rng, int(rng.integers(4, 128)))
            curve = decay_curve(dist, grid)
            assert np.all(np.diff(curve.correct_totals) < 0.0)
            assert np.all(np.diff(curve.incorrect_totals) < 0.0)

    def test_simulation_stability_trends(self):
        """bigger rollout batches end with more correct mass, milder drops, near-total improvement (8 paired seeds)"""
        start = time.perf_counter()
        runs = sweep_rollout_sizes(desk_preset(), [4, 64, 1024], seeds=range(8))
        n_grid = (4, 64, 1024)
        mean_final_q = []
        mean_worst = []
        for n in n_grid:
            mean_final_q.append(np.mean([runs[(n, s)].q_pos[-1] for s in range(8)]))
            mean_worst.append(np.mean([abs(min(runs[(n, s)].worst_drop)) for s in range(8)]))
        assert mean_final_q[0] < mean_final_q[1] < mean_final_q[2], mean_final_q
        assert mean_worst[0] > mean_worst[1] > mean_worst[2], mean_worst
        final_improved = min(runs[(1024, s)].fraction_improved[-1] for s in range(8))
        assert final_improved >= 0.99
        assert all(runs[key].diverged_at_step is None for key in runs)
        assert time.perf_counter() - start < 600.0

    def test_adaptive_controller_scenarios(self):
        """controller grows monotonically out of an adverse start and shrinks at most once when overshooting"""
        # adverse start: dominant correct token typically missing from tiny
        # pilot batches, rewards skewed positive
        logits = np.zeros(32)
        logits[0] = 2.2
        mask = np.zeros(32, dtype=bool)
        mask[:5] = True
        dist = LabeledDistribution(logits, mask)
        cfg = ControllerConfig(
            m_target=0.01,
            n_initial=2,
            n_max=256,
            growth_factor=2.0,
            shrink_threshold=4.0,
            pilot_sample_size=2,
            max_iterations=20,
        )
        trace = run_controller(dist, RewardScheme(1.0, 0.0), cfg, seed=25)
        ns = trace.n_sequence
        assert all(b >= a for a, b in zip(ns, ns[1:])), ns  # monotone growth
        assert len(set(ns)) > 1  # actually grew
        assert trace.converged
        assert trace.final_margin >= cfg.m_target

        # overshoot: margin far above target at the initial count
        dist2 = LabeledDistribution(np.zeros(2), np.array([True, False]))
        cfg2 = ControllerConfig(m_target=0.01, n_initial=16, n_max=256, pilot_sample_size=4)
        trace2 = run_controller(dist2, RewardScheme(), cfg2, seed=3)
        actions = [s.action for s in trace2.steps]
        assert actions.count("shrink") <= 1
        assert actions[-1] == "hold"
        assert trace2.converged

    def test_cli_csv_determinism(self, tmp_path, capsys):
        """simulate and sweep emit byte-identical CSV files across repeated runs with one seed"""
        cfg = {
            "version": 1,
            "vocab_size": 256,
            "num_correct": 16,
            "n_rollouts": 8,
            "steps": 40,
            "learning_rate": 1e-3,
            "optimizer": "adaptive_moments",
            "init_mode": "seeded",
            "seed": 11,
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(cfg))

        sim_a, sim_b = tmp_path / "sim_a.csv", tmp_path / "sim_b.csv"
        assert main(["simulate", str(cfg_path), "--out", str(sim_a)]) == 0
        assert main(["simulate", str(cfg_path), "--out", str(sim_b)]) == 0
        assert sim_a.read_bytes() == sim_b.read_bytes()

        sweep_a, sweep_b = tmp_path / "sweep_a.csv", tmp_path / "sweep_b.csv"
        sweep_args = ["sweep", str(cfg_path), "--n", "2,8", "--seeds", "2"]
        assert main(sweep_args + ["--out", str(sweep_a)]) == 0
        assert main(sweep_args + ["--out", str(sweep_b)]) == 0
        assert sweep_a.read_bytes() == sweep_b.read_bytes()
        capsys.readouterr()
