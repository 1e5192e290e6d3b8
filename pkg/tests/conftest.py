"""Shared random-instance generators and the acceptance summary report."""

import numpy as np
import pytest

from massbalance import LabeledDistribution, RewardScheme, RolloutBatch


def random_labeled(rng, v, vary_temperature=False):
    """A random labeled distribution with both label classes non-empty."""
    scale = rng.uniform(0.3, 2.5)
    logits = rng.normal(0.0, scale, size=v)
    temperature = float(rng.choice([0.7, 1.0, 1.0, 1.6])) if vary_temperature else 1.0
    mask = rng.random(v) < rng.uniform(0.1, 0.9)
    if not mask.any():
        mask[int(rng.integers(v))] = True
    if mask.all():
        mask[int(rng.integers(v))] = False
    return LabeledDistribution(logits, mask, temperature)


def random_batch(rng, dist, allow_empty=True, max_draw_factor=3):
    """A rollout batch: usually sampled from the distribution, sometimes uniform."""
    if allow_empty and rng.random() < 0.04:
        return RolloutBatch.empty()
    v = dist.vocab_size
    n = int(rng.integers(1, max_draw_factor * v + 1))
    if rng.random() < 0.5:
        draws = rng.choice(v, size=n, p=dist.probs)
    else:
        draws = rng.integers(0, v, size=n)
    return RolloutBatch.from_draws(draws, dist.correct_mask)


def random_rewards(rng, binary=True):
    if binary:
        return RewardScheme()
    while True:
        rc = float(rng.uniform(0.0, 2.0))
        rw = float(rng.uniform(-2.0, 0.0))
        if rc > rw:
            return RewardScheme(rc, rw)


def random_instance(rng, v, binary=True, allow_empty=True, vary_temperature=False):
    dist = random_labeled(rng, v, vary_temperature=vary_temperature)
    batch = random_batch(rng, dist, allow_empty=allow_empty)
    rewards = random_rewards(rng, binary=binary)
    eta = float(rng.uniform(1e-4, 1e-1))
    return dist, batch, rewards, eta


def assert_close_or_tiny(actual, expected, rtol=1e-10, atol=1e-14):
    """Relative agreement, switching to absolute when both sides are near zero."""
    if abs(expected) <= atol and abs(actual) <= atol:
        return
    np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)


# -- acceptance summary ------------------------------------------------------

_ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call" or "test_acceptance" not in str(item.fspath):
        return
    title = (item.function.__doc__ or item.name).strip().splitlines()[0]
    _ACCEPTANCE_RESULTS[title] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for title, verdict in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{verdict}  {title}")
