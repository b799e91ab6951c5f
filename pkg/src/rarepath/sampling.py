"""Importance-sampling measures, path sampling, and estimators.

Measures
--------
* ``mc``: plain Monte Carlo (original chain).
* ``bfb``: balanced failure biasing; failure transitions (order > 0) share
  probability p, repairs (order 0) share 1 - p, each uniformly.
* ``igbs``: interval-guided balanced sampling; as bfb, but after an
  order-0 step the failure share drops to delta (< p), which keeps
  high-probability cycles from soaking up sampling budget.
* ``zva-dbar``: zero-variance approximation with v(x) = eps**d(x, g).
* ``zva-delta``: zero-variance approximation with v(x) = the dominant-path
  probability from preprocessing.

The ZVA measures act on the reduced chain while the path remains inside
Lambda; on first exit the original dynamics take over with per-step
likelihood ratio 1.  Frontier states keep v = 1 (the shortcut measure), so
leaving Lambda is never starved of probability.

Estimators
----------
* ``plain``:    mean of L * 1[hit goal].
* ``plus``:     P(dominant) + mean of L over non-dominant goal hits,
                averaged over all N runs.
* ``plusplus``: P(dominant) + Q(non-dominant) * Y, where Y averages L over
                the M non-dominant runs only; its variance uses the
                conditional decomposition Q(Psi) * Var(L | Psi) / N.

Replications are split across deterministic per-worker RNG streams and the
partial moments are merged in stream order, so results depend only on
(seed, workers), not on scheduling.
"""

from __future__ import annotations

import math
import random
import time
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from rarepath.errors import ConfigError, ConvergenceError
from rarepath.model import (
    GOAL,
    TABOO,
    MarkovModel,
    Terminal,
    embed_ctmc,
    resolve_transitions,
)
from rarepath.orders import INFINITY
from rarepath.preproc import PreprocessResult

Z_95 = 1.959963984540054  # two-sided 95% normal quantile

MEASURES = ("mc", "bfb", "igbs", "zva-dbar", "zva-delta")
VARIANTS = ("plain", "plus", "plusplus")


@dataclass(frozen=True)
class ChangeOfMeasure:
    """A simulation measure, possibly backed by preprocessing output."""

    kind: str
    result: PreprocessResult | None = None
    p: float = 0.5
    delta: float = 1.0 / 100.0
    epsilon: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in MEASURES:
            raise ConfigError(f"unknown measure {self.kind!r}")
        if self.kind in ("bfb", "igbs") and not 0.0 < self.p < 1.0:
            raise ConfigError("bfb/igbs need 0 < p < 1")
        if self.kind == "igbs" and not 0.0 < self.delta < self.p:
            raise ConfigError("igbs needs 0 < delta < p")
        if self.is_zva:
            if self.result is None:
                raise ConfigError(f"{self.kind} requires preprocessing output")
            if self.kind == "zva-dbar" and not (
                self.epsilon is not None and 0.0 < self.epsilon < 1.0
            ):
                raise ConfigError("zva-dbar needs the model epsilon")

    @property
    def is_zva(self) -> bool:
        return self.kind in ("zva-dbar", "zva-delta")


@dataclass
class PathSample:
    hit_goal: bool
    likelihood: float
    order_sum: int
    steps: int
    left_lambda: bool
    dominant: bool
    #: optional per-step log of (state, target, p, q, order)
    trajectory: list[tuple[Any, Any, float, float, int]] | None = None


def _bfb_distribution(
    probs: Sequence[float], orders: Sequence[int], share: float
) -> list[float]:
    """Failure transitions share ``share``, repairs share the rest."""
    n_f = sum(1 for r in orders if r > 0)
    n_r = len(orders) - n_f
    if n_f == 0:
        return [1.0 / n_r] * n_r
    if n_r == 0:
        return [1.0 / n_f] * n_f
    return [share / n_f if r > 0 else (1.0 - share) / n_r for r in orders]


def zva_distribution(
    probs: Sequence[float], values: Sequence[float]
) -> list[float] | None:
    """q_i proportional to p_i * v(target_i).

    Returns None when every successor has value 0 (the caller falls back
    to the original probabilities, keeping the measure well-defined).
    """
    weights = [p * v for p, v in zip(probs, values)]
    total = sum(weights)
    if total <= 0.0:
        return None
    return [w / total for w in weights]


class Sampler:
    """Draws regeneration-cycle paths under a change of measure.

    Caches compiled per-state distributions; reads the preprocessing
    output without mutating it, so one instance per worker is safe.
    """

    def __init__(self, model: MarkovModel, com: ChangeOfMeasure):
        self.model = model
        self.com = com
        self.result = com.result
        self._rows: dict[Any, tuple] = {}
        self._dists: dict[tuple, list[float]] = {}

    def _row(self, state: Any) -> tuple:
        """(targets, probs, orders, cumulative-p) for ``state``."""
        row = self._rows.get(state)
        if row is None:
            res = self.result
            resolved = None
            if self.com.is_zva and res is not None:
                idx = res.indexer.lookup(state)
                if idx is not None and idx in res.overrides:
                    resolved = [
                        (res.indexer.state(z), p, r)
                        for z, p, r in res.overrides[idx]
                    ]
            if resolved is None:
                resolved = resolve_transitions(self.model, state)
            targets = tuple(t for t, _p, _r in resolved)
            probs = tuple(p for _t, p, _r in resolved)
            orders = tuple(r for _t, _p, r in resolved)
            row = (targets, probs, orders)
            self._rows[state] = row
        return row

    def _in_lambda(self, state: Any) -> bool:
        res = self.result
        if isinstance(state, Terminal):
            return True
        idx = res.indexer.lookup(state)
        return idx is not None and idx in res.lambda_indices

    def _value(self, state: Any) -> float:
        """v(target) under the active ZVA flavor."""
        res = self.result
        if state is GOAL:
            return 1.0
        if state is TABOO:
            return 0.0
        idx = res.indexer.lookup(state)
        if idx is None:
            return 0.0
        if self.com.kind == "zva-delta":
            return res.v_delta.get(idx, 0.0)
        d = res.d_backward.get(idx, INFINITY)
        return 0.0 if d == INFINITY else self.com.epsilon**d

    def _distribution(self, state: Any, context: bool) -> list[float]:
        """Cumulative q over the state's row.

        ``context`` flags the measure's state dependence: for igbs it is
        "previous step had order 0", for ZVA it is "still inside Lambda".
        """
        key = (state, context)
        cum = self._dists.get(key)
        if cum is not None:
            return cum
        targets, probs, orders = self._row(state)
        kind = self.com.kind
        if kind == "mc":
            q = list(probs)
        elif kind == "bfb":
            q = _bfb_distribution(probs, orders, self.com.p)
        elif kind == "igbs":
            share = self.com.delta if context else self.com.p
            q = _bfb_distribution(probs, orders, share)
        else:  # zva
            if context:
                q = zva_distribution(probs, [self._value(t) for t in targets])
                if q is None:
                    q = list(probs)
            else:
                q = list(probs)
        cum = []
        acc = 0.0
        for qi in q:
            acc += qi
            cum.append(acc)
        cum[-1] = 1.0  # guard against round-off at the top end
        self._dists[key] = cum
        return cum

    def sample(
        self, rng: random.Random, record: bool = False, max_steps: int = 10_000_000
    ) -> PathSample:
        com = self.com
        state = self.model.initial_state
        likelihood = 1.0
        order_sum = 0
        steps = 0
        left_lambda = False
        inside = com.is_zva  # importance sampling still active
        prev_zero = False
        trajectory: list | None = [] if record else None
        while True:
            if steps >= max_steps:
                raise ConvergenceError("path exceeded the step cap")
            context = prev_zero if com.kind == "igbs" else inside
            cum = self._distribution(state, context)
            targets, probs, orders = self._row(state)
            i = bisect_right(cum, rng.random())
            if i >= len(cum):
                i = len(cum) - 1
            q_i = cum[i] - (cum[i - 1] if i else 0.0)
            likelihood *= probs[i] / q_i
            order_sum += orders[i]
            steps += 1
            prev_zero = orders[i] == 0
            target = targets[i]
            if record:
                trajectory.append((state, target, probs[i], q_i, orders[i]))
            if target is GOAL:
                dominant = (
                    com.is_zva
                    and not left_lambda
                    and order_sum == com.result.d_sg
                )
                return PathSample(
                    True, likelihood, order_sum, steps, left_lambda, dominant,
                    trajectory,
                )
            if target is TABOO:
                return PathSample(
                    False, likelihood, order_sum, steps, left_lambda, False,
                    trajectory,
                )
            if inside and not self._in_lambda(target):
                left_lambda = True
                inside = False
            state = target


def sample_path(
    model: MarkovModel,
    com: ChangeOfMeasure,
    rng: random.Random,
    record: bool = False,
) -> PathSample:
    """Draw a single path (convenience wrapper around ``Sampler``)."""
    return Sampler(model, com).sample(rng, record=record)


def _reduced_rows(model: MarkovModel, result: PreprocessResult) -> dict[int, tuple]:
    """Index-space rows of the reduced chain over Lambda."""
    rows: dict[int, tuple] = {}
    for x in result.lambda_indices:
        if x in (result.goal_index, result.taboo_index):
            continue
        row = result.overrides.get(x)
        if row is None:
            resolved = []
            for t, p, r in resolve_transitions(model, result.indexer.state(x)):
                if t is GOAL:
                    z = result.goal_index
                elif t is TABOO:
                    z = result.taboo_index
                else:
                    z = result.indexer.lookup(t)
                    if z is None:
                        raise ConvergenceError(
                            "successor of a Lambda state was never indexed"
                        )
                resolved.append((z, p, r))
            row = tuple(resolved)
        rows[x] = row
    return rows


def compute_q_delta(
    model: MarkovModel, com: ChangeOfMeasure
) -> float:
    """Probability that a sampled path is dominant, under the measure.

    Dynamic program mirroring the backward phase: w(g) = 1 and

        w(x) = sum of q(x, z) * w(z) over successors z
               with order(x, z) + d(z, g) = d(x, g),

    evaluated in backward processing order; returns w(s).
    """
    if not com.is_zva:
        raise ConfigError("dominance probability requires a ZVA measure")
    res = com.result
    sampler = Sampler(model, com)
    rows = _reduced_rows(model, res)
    db = res.d_backward
    w: dict[int, float] = {res.goal_index: 1.0, res.taboo_index: 0.0}
    for x in res.processing_order:
        if x == res.goal_index or x == res.taboo_index:
            continue
        if x in res.gamma_indices:
            w[x] = 1.0  # shortcut straight to g with q = 1
            continue
        row = rows[x]
        probs = [p for _z, p, _r in row]
        values = [
            1.0 if z == res.goal_index
            else 0.0 if z == res.taboo_index
            else sampler._value(res.indexer.state(z))
            for z, _p, _r in row
        ]
        q = zva_distribution(probs, values)
        if q is None:
            q = probs
        dx = db.get(x, INFINITY)
        total = 0.0
        for (z, _p, r), qi in zip(row, q):
            if r + db.get(z, INFINITY) == dx:
                total += qi * w.get(z, 0.0)
        w[x] = total
    return w.get(res.s_index, 0.0)


@dataclass
class _StreamStats:
    """Partial moments of one RNG stream; merged by plain summation."""

    n: int = 0
    sum1: float = 0.0  # sum of L * 1[hit]
    sum2: float = 0.0
    hits: int = 0
    m: int = 0  # non-dominant runs
    nd_sum1: float = 0.0  # sums over non-dominant runs only
    nd_sum2: float = 0.0

    def add(self, sample: PathSample) -> None:
        x = sample.likelihood if sample.hit_goal else 0.0
        self.n += 1
        self.sum1 += x
        self.sum2 += x * x
        if sample.hit_goal:
            self.hits += 1
        if not sample.dominant:
            self.m += 1
            self.nd_sum1 += x
            self.nd_sum2 += x * x

    def merge(self, other: "_StreamStats") -> None:
        self.n += other.n
        self.sum1 += other.sum1
        self.sum2 += other.sum2
        self.hits += other.hits
        self.m += other.m
        self.nd_sum1 += other.nd_sum1
        self.nd_sum2 += other.nd_sum2


@dataclass
class Estimate:
    """Point estimate with CI and the bookkeeping needed for reports."""

    method: str
    variant: str
    mean: float
    ci_half_width: float | None
    n_runs: int
    n_hits: int
    n_nondominant: int
    p_delta: float | None
    q_delta: float | None
    wall_time_s: float

    @property
    def rel_half_width(self) -> float | None:
        if self.ci_half_width is None or self.mean == 0.0:
            return None
        return self.ci_half_width / self.mean


def _stream_seed(seed: int, worker: int) -> random.Random:
    # string seeding hashes with SHA-512 internally: stable across runs
    # and processes, unlike tuple seeding (deprecated)
    return random.Random(f"{seed}:{worker}")


def _run_stream(
    model: MarkovModel,
    com: ChangeOfMeasure,
    n: int,
    seed: int,
    worker: int,
    deadline: float | None = None,
) -> _StreamStats:
    sampler = Sampler(model, com)
    rng = _stream_seed(seed, worker)
    stats = _StreamStats()
    for _ in range(n):
        if deadline is not None and time.perf_counter() >= deadline:
            break
        stats.add(sampler.sample(rng))
    return stats


def run_estimator(
    model: MarkovModel,
    com: ChangeOfMeasure,
    variant: str = "plain",
    n_runs: int | None = None,
    time_budget_ms: float | None = None,
    seed: int = 0,
    workers: int = 1,
) -> Estimate:
    """Run replications under the measure and form the chosen estimator.

    Exactly one of ``n_runs`` and ``time_budget_ms`` must be given.  In the
    budgeted mode replications are issued until the deadline passes, so run
    counts (and therefore results) are not reproducible; fixed ``n_runs``
    with fixed (seed, workers) is fully deterministic.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown estimator variant {variant!r}")
    if variant != "plain" and not com.is_zva:
        raise ConfigError(f"variant {variant!r} requires a ZVA measure")
    if (n_runs is None) == (time_budget_ms is None):
        raise ConfigError("give exactly one of n_runs and time_budget_ms")
    t0 = time.perf_counter()
    total = _StreamStats()
    if time_budget_ms is not None:
        deadline = t0 + time_budget_ms / 1000.0
        total = _run_stream(model, com, 2**62, seed, 0, deadline)
    else:
        counts = [
            n_runs // workers + (1 if i < n_runs % workers else 0)
            for i in range(workers)
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(_run_stream, model, com, counts[i], seed, i)
                    for i in range(workers)
                    if counts[i] > 0
                ]
                for fut in futures:  # submission order keeps merging stable
                    total.merge(fut.result())
        else:
            for i in range(workers):
                if counts[i] > 0:
                    total.merge(_run_stream(model, com, counts[i], seed, i))
    wall = time.perf_counter() - t0
    if total.n == 0:
        raise ConfigError("no replications were run")
    p_delta = com.result.p_delta if com.is_zva else None
    q_delta = (
        compute_q_delta(model, com)
        if com.is_zva and variant == "plusplus"
        else None
    )
    n = total.n
    if variant == "plain":
        mean = total.sum1 / n
        var = _sample_variance(total.sum1, total.sum2, n)
        hw = Z_95 * math.sqrt(var / n) if var is not None else None
    elif variant == "plus":
        mean = p_delta + total.nd_sum1 / n
        var = _sample_variance(total.nd_sum1, total.nd_sum2, n)
        hw = Z_95 * math.sqrt(var / n) if var is not None else None
    else:  # plusplus
        q_psi = 1.0 - q_delta
        y = total.nd_sum1 / total.m if total.m > 0 else 0.0
        mean = p_delta + q_psi * y
        if total.m >= 2:
            var_l = _sample_variance(total.nd_sum1, total.nd_sum2, total.m)
            hw = Z_95 * math.sqrt(q_psi * var_l / n)
        else:
            hw = None
    return Estimate(
        method=com.kind,
        variant=variant,
        mean=mean,
        ci_half_width=hw,
        n_runs=n,
        n_hits=total.hits,
        n_nondominant=total.m,
        p_delta=p_delta,
        q_delta=q_delta,
        wall_time_s=wall,
    )


def _sample_variance(s1: float, s2: float, n: int) -> float | None:
    if n < 2:
        return None
    return max((s2 - s1 * s1 / n) / (n - 1), 0.0)


def confidence_interval(s1: float, s2: float, n: int) -> tuple[float, float]:
    """(mean, 95% CI half-width) from raw moments."""
    if n < 2:
        raise ValueError("need at least two samples")
    mean = s1 / n
    var = _sample_variance(s1, s2, n)
    return mean, Z_95 * math.sqrt(var / n)


def wnvr(mc: Estimate, other: Estimate) -> float | None:
    """Work-normalized variance ratio of ``other`` against plain MC.

    (w_MC / w_m)^2 * (t_MC / t_m) with w the CI half-widths and t the wall
    times; None (reported "---") when either half-width is missing or 0.
    """
    if not mc.ci_half_width or not other.ci_half_width:
        return None
    if other.wall_time_s <= 0.0 or mc.wall_time_s <= 0.0:
        return None
    ratio = mc.ci_half_width / other.ci_half_width
    return ratio * ratio * mc.wall_time_s / other.wall_time_s


def estimate_unavailability(
    model: MarkovModel,
    pi_estimate: float,
    com: ChangeOfMeasure | None = None,
    n_cycles: int = 10_000,
    seed: int = 0,
) -> float:
    """Steady-state unavailability via the regenerative ratio estimator.

    v = E(time in goal states per cycle) / E(cycle duration).  The
    denominator comes from plain-MC regeneration cycles that pass through
    goal states using the model's unmerged dynamics.  The numerator is
    pi * E(goal sojourn | goal reached): with a ZVA measure supplied, goal
    entries are sampled by importance sampling and weighted by likelihood;
    re-entries within one cycle are not tracked (documented approximation
    of the ratio estimator; no joint CI is produced).

    Requires ``model.sojourn_rate`` and goal states with successors.  Only
    models whose reachable part is free of order-0 cycles are supported
    (sojourn times through removed cycles would be lost otherwise).
    """
    rng = _stream_seed(seed, 0)
    cap = 10_000_000

    def raw_step(state: Any, r: random.Random) -> Any:
        """One jump of the original, unmerged chain."""
        trans = list(model.successors(state))
        if model.emits_rates:
            trans = embed_ctmc(trans)
        u = r.random()
        acc = 0.0
        for t in trans:
            acc += t.weight
            if u < acc:
                return t.target
        return trans[-1].target

    duration_total = 0.0
    goal_time_plain = 0.0
    for _ in range(n_cycles):
        state = model.initial_state
        for _ in range(cap):
            duration = 1.0 / model.sojourn_rate(state)
            duration_total += duration
            if model.is_goal(state):
                goal_time_plain += duration
            nxt = raw_step(state, rng)
            if model.is_taboo(nxt):
                break
            state = nxt
        else:
            raise ConvergenceError("regeneration cycle exceeded the step cap")
    mean_duration = duration_total / n_cycles
    if com is None:
        return (goal_time_plain / n_cycles) / mean_duration

    # importance-sampled goal sojourn: likelihood-weighted mean time spent
    # in the goal set after first entry
    sampler = Sampler(model, com)
    rng_is = _stream_seed(seed, 1)
    weight_total = 0.0
    sojourn_total = 0.0
    for _ in range(n_cycles):
        sample = sampler.sample(rng_is, record=True)
        if not sample.hit_goal:
            continue
        # the merged jump hides which goal state was entered; conditionally
        # on entering the goal set, entries are weight-proportional
        pre_goal = sample.trajectory[-1][0]
        goal_succ = [
            t for t in model.successors(pre_goal) if model.is_goal(t.target)
        ]
        total_w = sum(t.weight for t in goal_succ)
        u = rng_is.random() * total_w
        acc = 0.0
        state = goal_succ[-1].target
        for t in goal_succ:
            acc += t.weight
            if u < acc:
                state = t.target
                break
        sojourn = 0.0
        for _ in range(cap):
            if not model.is_goal(state):
                break
            sojourn += 1.0 / model.sojourn_rate(state)
            state = raw_step(state, rng_is)
        weight_total += sample.likelihood
        sojourn_total += sample.likelihood * sojourn
    if weight_total <= 0.0:
        return 0.0
    mean_goal_sojourn = sojourn_total / weight_total
    return pi_estimate * mean_goal_sojourn / mean_duration
