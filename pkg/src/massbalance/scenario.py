"""Versioned JSON scenario documents for the analysis tools.

A scenario pins down everything a one-step analysis needs: a distribution
(explicit logits or a generator), the correct set, the rewards, a batch
(explicit index sets or "sample n"), and the step size.  The format is a
single JSON tree with an explicit ``"version"`` field; parsing collects every
violation before failing so a document can be fixed in one pass.

Document shape (version 1)::

    {
      "version": 1,
      "seed": 7,                          # required by any randomized part
      "distribution": {
        "logits": [0.0, 0.5, ...],        # either explicit ...
        "generator": {                    # ... or generated
          "kind": "uniform" | "seeded" | "random",
          "vocab_size": 64,
          "correct_logit": 3.0,           # seeded only (default 3)
          "anchor_index": 0,              # seeded only (optional)
          "anchor_logit": 5.0,            # seeded only (default 5)
          "concentration": 1.0            # random only (Dirichlet-style)
        },
        "temperature": 1.0                # optional (default 1)
      },
      "correct_set": {"indices": [0, 3]}  # or {"count": 16, "placement": "first" | "random"}
      "rewards": {"r_correct": 1.0, "r_wrong": -1.0},   # optional (defaults)
      "batch": {                          # optional for tools that resample
        "sampled_correct": [...],
        "sampled_incorrect": [...],
        "multiplicities": {"3": 2}        # optional (default 1 each)
      }                                   # or {"sample": true} with top-level "n"
      "eta": 0.1,
      "n": 16                             # draw count (inferred for explicit batches)
    }

``parse_scenario`` validates structure only; cross-checks that need the
realized distribution (index ranges, label agreement) happen in ``build``
and surface as the same error type with the same diagnostic codes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dist import LabeledDistribution, RewardScheme, RolloutBatch
from .errors import InvalidBatchError, InvalidInputError, ScenarioError
from .sampling import sample_batch
from .seeding import STREAM_BATCH, STREAM_SCENARIO, seed_stream

__all__ = ["ScenarioFile", "BuiltScenario", "parse_scenario", "serialize_scenario"]

SCENARIO_VERSION = 1


@dataclass(frozen=True)
class BuiltScenario:
    """A scenario realized into concrete objects."""

    dist: LabeledDistribution
    batch: Optional[RolloutBatch]
    rewards: RewardScheme
    eta: float
    n: Optional[int]


class _Diagnostics:
    def __init__(self):
        self.items: list[tuple[str, str]] = []

    def add(self, code: str, msg: str) -> None:
        self.items.append((code, msg))

    def raise_if_any(self) -> None:
        if self.items:
            raise ScenarioError(self.items)


def _expect(raw: dict, key: str, types, diags: _Diagnostics, *, required=True, ctx=""):
    where = f"{ctx}.{key}" if ctx else key
    if key not in raw:
        if required:
            diags.add("missing-field", f"{where} is required")
        return None
    val = raw[key]
    if types is None:
        return val
    expected = types if isinstance(types, tuple) else (types,)
    # bool subclasses int in Python; reject it wherever a number is expected
    bad_bool = isinstance(val, bool) and bool not in expected
    if bad_bool or not isinstance(val, expected):
        names = "/".join(t.__name__ for t in expected)
        diags.add("bad-type", f"{where} must be {names}, got {type(val).__name__}")
        return None
    return val


def _int_list(val, name: str, diags: _Diagnostics) -> Optional[list[int]]:
    if not isinstance(val, list) or any(isinstance(x, bool) or not isinstance(x, int) for x in val):
        diags.add("bad-type", f"{name} must be a list of integers")
        return None
    return val


@dataclass(frozen=True)
class ScenarioFile:
    """Parsed, structurally validated scenario (see the module docstring)."""

    version: int
    distribution: dict
    correct_set: dict
    rewards: RewardScheme
    batch: Optional[dict]
    eta: float
    n: Optional[int]
    seed: Optional[int]

    def to_json(self) -> str:
        return serialize_scenario(self)

    # -- realization ------------------------------------------------------

    def _build_logits(self, diags: _Diagnostics) -> Optional[np.ndarray]:
        spec = self.distribution
        if "logits" in spec:
            return np.asarray(spec["logits"], dtype=np.float64)
        gen = spec["generator"]
        kind = gen["kind"]
        v = gen["vocab_size"]
        if kind == "uniform":
            return np.zeros(v)
        if kind == "seeded":
            z = np.zeros(v)
            idx = self._correct_indices(v, diags)
            if idx is None:
                return None
            z[idx] = gen.get("correct_logit", 3.0)
            anchor = gen.get("anchor_index")
            if anchor is not None:
                if not 0 <= anchor < v:
                    diags.add("index-out-of-range", f"generator.anchor_index {anchor} not in [0, {v})")
                    return None
                z[anchor] = gen.get("anchor_logit", 5.0)
            return z
        # random: Dirichlet-style probabilities, logits are their logs
        rng = seed_stream(STREAM_SCENARIO, self.seed)
        probs = rng.dirichlet(np.full(v, float(gen.get("concentration", 1.0))))
        probs = np.clip(probs, 1e-300, None)
        return np.log(probs)

    def _correct_indices(self, vocab_size: int, diags: _Diagnostics) -> Optional[np.ndarray]:
        spec = self.correct_set
        if "indices" in spec:
            idx = np.asarray(spec["indices"], dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= vocab_size):
                bad = idx[(idx < 0) | (idx >= vocab_size)].tolist()
                diags.add("index-out-of-range", f"correct_set.indices out of [0, {vocab_size}): {bad}")
                return None
            return idx
        count = spec["count"]
        if count >= vocab_size:
            diags.add("bad-value", f"correct_set.count {count} must be < vocab size {vocab_size}")
            return None
        if spec.get("placement", "first") == "first":
            return np.arange(count, dtype=np.int64)
        rng = seed_stream(STREAM_SCENARIO, self.seed, 1)
        return np.sort(rng.choice(vocab_size, size=count, replace=False)).astype(np.int64)

    def build(self) -> BuiltScenario:
        """Realize the document; raises ``ScenarioError`` on cross-check failures."""
        diags = _Diagnostics()
        logits = self._build_logits(diags)
        diags.raise_if_any()
        assert logits is not None
        v = logits.size

        idx = self._correct_indices(v, diags)
        diags.raise_if_any()
        assert idx is not None
        mask = np.zeros(v, dtype=bool)
        mask[idx] = True

        temperature = self.distribution.get("temperature", 1.0)
        try:
            dist = LabeledDistribution(logits, mask, temperature)
        except InvalidInputError as exc:
            raise ScenarioError([("bad-value", f"distribution: {exc}")]) from exc

        batch, n = self._build_batch(dist, diags)
        diags.raise_if_any()
        return BuiltScenario(dist=dist, batch=batch, rewards=self.rewards, eta=self.eta, n=n)

    def _build_batch(self, dist, diags: _Diagnostics):
        if self.batch is None:
            return None, self.n
        if self.batch.get("sample"):
            assert self.n is not None and self.seed is not None  # enforced at parse
            rng = seed_stream(STREAM_BATCH, self.seed)
            return sample_batch(dist, self.n, rng), self.n

        a = np.asarray(self.batch["sampled_correct"], dtype=np.int64)
        b = np.asarray(self.batch["sampled_incorrect"], dtype=np.int64)
        mult = self.batch.get("multiplicities")
        v = dist.vocab_size
        for name, arr in (("sampled_correct", a), ("sampled_incorrect", b)):
            if arr.size and (arr.min() < 0 or arr.max() >= v):
                bad = arr[(arr < 0) | (arr >= v)].tolist()
                diags.add("index-out-of-range", f"batch.{name} out of [0, {v}): {bad}")
        if diags.items:
            return None, None
        mismatched_a = a[~dist.correct_mask[a]] if a.size else np.empty(0, np.int64)
        mismatched_b = b[dist.correct_mask[b]] if b.size else np.empty(0, np.int64)
        if mismatched_a.size:
            diags.add(
                "mask-mismatch",
                f"batch.sampled_correct tokens labeled incorrect: {mismatched_a.tolist()}",
            )
        if mismatched_b.size:
            diags.add(
                "mask-mismatch",
                f"batch.sampled_incorrect tokens labeled correct: {mismatched_b.tolist()}",
            )
        if diags.items:
            return None, None

        if mult is not None:
            mult_map = {int(k): int(vv) for k, vv in mult.items()}
            inferred = sum(mult_map.values())
        else:
            mult_map = None
            inferred = int(a.size + b.size)
        n = self.n if self.n is not None else inferred
        if n != inferred:
            diags.add(
                "multiplicity-mismatch",
                f"n is {n} but batch multiplicities total {inferred}",
            )
            return None, None
        try:
            batch = RolloutBatch(a, b, n, mult_map)
        except InvalidBatchError as exc:
            diags.add("bad-value", f"batch: {exc}")
            return None, None
        return batch, n


def _validate_distribution(raw, diags: _Diagnostics) -> None:
    if raw is None:
        return
    has_logits = "logits" in raw
    has_gen = "generator" in raw
    if has_logits == has_gen:
        diags.add("bad-value", "distribution needs exactly one of: logits, generator")
        return
    if has_logits:
        val = raw["logits"]
        if not isinstance(val, list) or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) for x in val
        ):
            diags.add("bad-type", "distribution.logits must be a list of numbers")
        elif len(val) < 2:
            diags.add("bad-value", "distribution.logits needs at least two entries")
        return
    gen = raw["generator"]
    if not isinstance(gen, dict):
        diags.add("bad-type", "distribution.generator must be an object")
        return
    kind = _expect(gen, "kind", str, diags, ctx="distribution.generator")
    v = _expect(gen, "vocab_size", int, diags, ctx="distribution.generator")
    if kind is not None and kind not in ("uniform", "seeded", "random"):
        diags.add("bad-value", f"unknown generator kind {kind!r}")
    if v is not None and v < 2:
        diags.add("bad-value", "generator.vocab_size must be >= 2")


def _validate_correct_set(raw, diags: _Diagnostics) -> None:
    if raw is None:
        return
    if not isinstance(raw, dict):
        diags.add("bad-type", "correct_set must be an object")
        return
    has_idx = "indices" in raw
    has_count = "count" in raw
    if has_idx == has_count:
        diags.add("bad-value", "correct_set needs exactly one of: indices, count")
        return
    if has_idx:
        idx = _int_list(raw["indices"], "correct_set.indices", diags)
        if idx is not None and len(set(idx)) != len(idx):
            diags.add("bad-value", "correct_set.indices contains duplicates")
        if idx is not None and len(idx) == 0:
            diags.add("bad-value", "correct_set.indices must not be empty")
    else:
        count = raw["count"]
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            diags.add("bad-value", "correct_set.count must be a positive integer")
        placement = raw.get("placement", "first")
        if placement not in ("first", "random"):
            diags.add("bad-value", f"unknown placement {placement!r}")


def _validate_batch(raw, n, seed, diags: _Diagnostics) -> None:
    if raw is None:
        return
    if not isinstance(raw, dict):
        diags.add("bad-type", "batch must be an object")
        return
    if raw.get("sample"):
        if n is None:
            diags.add("missing-field", "sampled batches need a top-level n")
        if seed is None:
            diags.add("seed-required", "sampled batches need a top-level seed")
        return
    a = raw.get("sampled_correct")
    b = raw.get("sampled_incorrect")
    if a is None or b is None:
        diags.add(
            "missing-field",
            "explicit batches need sampled_correct and sampled_incorrect",
        )
        return
    la = _int_list(a, "batch.sampled_correct", diags)
    lb = _int_list(b, "batch.sampled_incorrect", diags)
    if la is None or lb is None:
        return
    overlap = set(la) & set(lb)
    if overlap:
        diags.add("overlap", f"batch index sets overlap: {sorted(overlap)}")
    mult = raw.get("multiplicities")
    if mult is not None:
        if not isinstance(mult, dict):
            diags.add("bad-type", "batch.multiplicities must be an object")
            return
        try:
            mult_map = {int(k): v for k, v in mult.items()}
        except ValueError:
            diags.add("bad-type", "batch.multiplicities keys must be integer strings")
            return
        if any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in mult.values()):
            diags.add("bad-value", "batch.multiplicities values must be integers >= 1")
            return
        if set(mult_map) != set(la) | set(lb):
            diags.add(
                "multiplicity-mismatch",
                "multiplicities keys must equal the union of the batch index sets",
            )


def parse_scenario(text: str) -> ScenarioFile:
    """Parse + structurally validate a scenario document (all violations at once)."""
    diags = _Diagnostics()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([("bad-json", str(exc))]) from exc
    if not isinstance(raw, dict):
        raise ScenarioError([("bad-type", "top level must be an object")])

    version = _expect(raw, "version", int, diags)
    if version is not None and version != SCENARIO_VERSION:
        diags.add("unknown-version", f"supported version is {SCENARIO_VERSION}, got {version}")

    dist_raw = _expect(raw, "distribution", dict, diags)
    _validate_distribution(dist_raw, diags)
    correct_raw = _expect(raw, "correct_set", dict, diags)
    _validate_correct_set(correct_raw, diags)

    rewards_raw = raw.get("rewards", {"r_correct": 1.0, "r_wrong": -1.0})
    rewards = None
    if not isinstance(rewards_raw, dict):
        diags.add("bad-type", "rewards must be an object")
    else:
        try:
            rewards = RewardScheme(
                float(rewards_raw.get("r_correct", 1.0)),
                float(rewards_raw.get("r_wrong", -1.0)),
            )
        except (InvalidInputError, TypeError, ValueError) as exc:
            diags.add("bad-value", f"rewards: {exc}")

    eta = _expect(raw, "eta", (int, float), diags)
    if eta is not None and (isinstance(eta, bool) or not eta > 0.0):
        diags.add("bad-value", f"eta must be > 0, got {eta!r}")

    n = raw.get("n")
    if n is not None and (isinstance(n, bool) or not isinstance(n, int) or n < 0):
        diags.add("bad-value", f"n must be a nonnegative integer, got {n!r}")
        n = None
    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        diags.add("bad-type", "seed must be an integer")
        seed = None

    uses_generator = isinstance(dist_raw, dict) and "generator" in dist_raw
    random_gen = (
        uses_generator
        and isinstance(dist_raw.get("generator"), dict)
        and dist_raw["generator"].get("kind") == "random"
    )
    random_placement = (
        isinstance(correct_raw, dict) and correct_raw.get("placement") == "random"
    )
    if (random_gen or random_placement) and seed is None:
        diags.add("seed-required", "randomized generators/placements need a top-level seed")

    batch_raw = raw.get("batch")
    _validate_batch(batch_raw, n, seed, diags)

    diags.raise_if_any()
    return ScenarioFile(
        version=int(version),
        distribution=dist_raw,
        correct_set=correct_raw,
        rewards=rewards,
        batch=batch_raw,
        eta=float(eta),
        n=n,
        seed=seed,
    )


def serialize_scenario(sf: ScenarioFile) -> str:
    """Canonical JSON text (sorted keys, round-trips through parse_scenario)."""
    doc = {
        "version": sf.version,
        "distribution": sf.distribution,
        "correct_set": sf.correct_set,
        "rewards": {"r_correct": sf.rewards.r_correct, "r_wrong": sf.rewards.r_wrong},
        "eta": sf.eta,
    }
    if sf.batch is not None:
        doc["batch"] = sf.batch
    if sf.n is not None:
        doc["n"] = sf.n
    if sf.seed is not None:
        doc["seed"] = sf.seed
    return json.dumps(doc, indent=2, sort_keys=True)
