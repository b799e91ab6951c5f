"""Graph-based preprocessing for the importance-sampling measure.

Three phases over the implicitly defined chain:

* forward phase: Dijkstra-like search over rarity orders from the initial
  state s; yields d(s, x) and the relevant set Lambda = {x : d(s,x) <=
  d(s,g)}.  Whenever an order-0 cycle (a "high-probability cycle", HPC) is
  found inside Lambda, it is removed by redistributing each member's
  outgoing probability over the cycle's exit states, which preserves all
  hitting probabilities while eliminating zero-order cycles.
* backward phase: computes d(x, g) and v(x), the total probability of the
  dominant (minimal-order) paths from x to g, over Lambda plus its direct
  frontier Gamma.  Frontier states carry an implicit shortcut to g, so
  paths leaving Lambda are never starved of sampling mass.

All tie-breaking is by state discovery order, so results are deterministic.
"""

from __future__ import annotations

import heapq
import time

import numpy as np
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from rarepath.errors import (
    ConvergenceError,
    GoalUnreachableError,
    ModelError,
    StateBudgetExceeded,
)
from rarepath.model import GOAL, TABOO, MarkovModel, StateIndexer, resolve_transitions
from rarepath.orders import INFINITY, Order

DEFAULT_STATE_BUDGET = 1_000_000

#: a resolved transition: (target index, probability, order)
Edge = tuple[int, float, int]
Row = tuple[Edge, ...]


class ChainView:
    """Reduced chain: the model plus HPC-removal row overrides.

    Rows are resolved lazily (CTMC embedding, goal/taboo merging, state
    indexing) and cached.  The initial state is indexed as a regular node
    even when its descriptor satisfies the taboo predicate (regenerative
    models reuse the start state as the return state); only transition
    *targets* are merged into the taboo node.
    """

    def __init__(self, model: MarkovModel, state_budget: int = DEFAULT_STATE_BUDGET):
        if model.is_goal(model.initial_state):
            raise ModelError("initial state must not be a goal state")
        self.model = model
        self.state_budget = state_budget
        self.indexer = StateIndexer()
        self.s_index = self.indexer.index(model.initial_state)
        self.goal_index = self.indexer.index(GOAL)
        self.taboo_index = self.indexer.index(TABOO)
        self.overrides: dict[int, Row] = {}
        self._cache: dict[int, Row] = {}

    def is_terminal(self, idx: int) -> bool:
        return idx == self.goal_index or idx == self.taboo_index

    def succ(self, idx: int) -> Row:
        row = self._cache.get(idx)
        if row is None:
            if self.is_terminal(idx):
                raise ModelError("terminal states have no successors")
            override = self.overrides.get(idx)
            if override is not None:
                row = override
            else:
                descr = self.indexer.state(idx)
                row = tuple(
                    (self.indexer.index(target), p, r)
                    for target, p, r in resolve_transitions(self.model, descr)
                )
                if len(self.indexer) > self.state_budget:
                    raise StateBudgetExceeded(
                        f"more than {self.state_budget} states discovered"
                    )
            self._cache[idx] = row
        return row

    def set_override(self, idx: int, row: Row) -> None:
        self.overrides[idx] = row
        self._cache[idx] = row


@dataclass
class ForwardResult:
    d_forward: dict[int, Order]
    lambda_set: frozenset[int]
    hpc_count: int


def solve_exit_distribution(
    internal: Mapping[int, list[tuple[int, float]]],
    direct: Mapping[int, list[tuple[int, float]]],
    members: list[int],
    exits: list[int],
) -> dict[int, dict[int, float]]:
    """Eventual exit probabilities of an order-0 cycle.

    For every cycle member x and exit state z, solves the absorbing system

        mu[x][z] = p(x, z) + sum over members x2 of p(x, x2) * mu[x2][z]

    directly as (I - P_internal) M = D.  A fixed-point iteration would need
    on the order of 1/p_exit sweeps when the exit probabilities are tiny,
    so the dense solve is the only numerically safe option.  Hitting
    probabilities of the surrounding chain are unchanged when each member's
    row is replaced by its exit distribution.
    """
    pos = {x: i for i, x in enumerate(members)}
    n, k = len(members), len(exits)
    a = np.eye(n)
    d = np.zeros((n, k))
    exit_pos = {z: j for j, z in enumerate(exits)}
    for x in members:
        i = pos[x]
        for x2, p in internal[x]:
            a[i, pos[x2]] -= p
        for z, p in direct[x]:
            d[i, exit_pos[z]] += p
    try:
        m = np.linalg.solve(a, d)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"exit-distribution solve failed: {exc}") from None
    mu = {x: {z: float(m[pos[x], exit_pos[z]]) for z in exits} for x in members}
    for x in members:
        total = sum(mu[x].values())
        # the system gets ill-conditioned as the exit mass shrinks (cond
        # ~ 1/p_exit), so allow a commensurate residual and renormalize
        if abs(total - 1.0) > 1e-6:
            raise ConvergenceError(
                f"exit probabilities of cycle member sum to {total}, not 1"
            )
        mu[x] = {z: p / total for z, p in mu[x].items()}
    return mu


def loop_detect(view: ChainView, trigger: int) -> list[int] | None:
    """Find and remove the order-0 cycle through ``trigger``, if any.

    Computes the order-0 strongly connected component L containing the
    trigger (forward closure intersected with backward closure), solves the
    exit distribution, and overrides every member's row with its exits.
    Replacement orders are the cheapest exit order reachable from the
    component, shifted so the most likely exit has order 0.  Returns the
    sorted member list, or None for a benign trigger (no actual cycle).
    """
    # forward order-0 closure
    closure = {trigger}
    stack = [trigger]
    while stack:
        x = stack.pop()
        if view.is_terminal(x):
            continue
        for z, _p, r in view.succ(x):
            if r == 0 and z not in closure:
                closure.add(z)
                stack.append(z)
    # backward order-0 closure within the forward closure
    rev: dict[int, list[int]] = {x: [] for x in closure}
    for x in closure:
        if view.is_terminal(x):
            continue
        for z, _p, r in view.succ(x):
            if r == 0 and z in closure:
                rev[z].append(x)
    members_set = {trigger}
    stack = [trigger]
    while stack:
        x = stack.pop()
        for z in rev[x]:
            if z not in members_set:
                members_set.add(z)
                stack.append(z)
    members = sorted(members_set)
    if len(members) == 1:
        has_self_loop = any(
            z == trigger and r == 0 for z, _p, r in view.succ(trigger)
        )
        if not has_self_loop:
            return None
    internal: dict[int, list[tuple[int, float]]] = {}
    direct: dict[int, list[tuple[int, float]]] = {}
    exit_order: dict[int, int] = {}
    for x in members:
        internal[x] = []
        direct[x] = []
        for z, p, r in view.succ(x):
            if z in members_set:
                internal[x].append((z, p))
            else:
                direct[x].append((z, p))
                prev = exit_order.get(z)
                if prev is None or r < prev:
                    exit_order[z] = r
    if not exit_order:
        raise ModelError("order-0 cycle with no exit transitions")
    exits = sorted(exit_order)
    base = min(exit_order.values())
    mu = solve_exit_distribution(internal, direct, members, exits)
    for x in members:
        row = tuple(
            (z, mu[x][z], exit_order[z] - base) for z in exits if mu[x][z] > 0.0
        )
        view.set_override(x, row)
    return members


def forward_phase(view: ChainView) -> ForwardResult:
    """Explore the chain from s in order of increasing rarity order.

    Returns shortest-order distances d(s, x) and the relevant set Lambda.
    Exploration stops once every state at distance <= d(s, g) has been
    expanded; cycle removal may lower already-settled distances, in which
    case the affected states are re-queued.
    """
    s = view.s_index
    goal = view.goal_index
    d: dict[int, Order] = {s: 0}
    heap: list[tuple[Order, int]] = [(0, s)]
    settled: set[int] = set()
    benign: set[int] = set()
    hpc_count = 0
    while heap:
        du, x = heapq.heappop(heap)
        if x in settled or du > d.get(x, INFINITY):
            continue
        if du > d.get(goal, INFINITY):
            break
        settled.add(x)
        if view.is_terminal(x):
            continue
        expand = True
        while expand:
            expand = False
            for z, _p, r in view.succ(x):
                nd = du + r
                if nd < d.get(z, INFINITY):
                    d[z] = nd
                    settled.discard(z)
                    heapq.heappush(heap, (nd, z))
                if (
                    r == 0
                    and z in settled
                    and not view.is_terminal(z)
                    and d.get(z) == du
                    and z not in benign
                ):
                    members = loop_detect(view, z)
                    if members is None:
                        benign.add(z)
                        continue
                    hpc_count += 1
                    benign.clear()
                    for m in members:
                        if m in settled:
                            settled.discard(m)
                            heapq.heappush(heap, (d[m], m))
                    if x in members:
                        # x's own row was replaced; it was re-queued above
                        expand = False
                        break
                    # other rows changed but x's is intact: rescan x
                    expand = True
                    break
    if goal not in d:
        raise GoalUnreachableError("goal is unreachable from the initial state")
    d_goal = d[goal]
    lambda_set = frozenset(x for x in settled if d[x] <= d_goal)
    return ForwardResult(d, lambda_set, hpc_count)


@dataclass
class BackwardResult:
    gamma_set: frozenset[int]
    d_backward: dict[int, Order]
    v_delta: dict[int, float]
    processing_order: tuple[int, ...]


def backward_phase(view: ChainView, lambda_set: frozenset[int]) -> BackwardResult:
    """Distance-to-goal and dominant-path probability over Lambda + Gamma.

    Gamma is the frontier: non-terminal states directly reachable from
    Lambda that lie outside it.  Each frontier state behaves as if it
    reached g with probability 1 at order 0 (the shortcut measure), so
    d(gamma, g) = 0 and v(gamma) = 1.  For every other node,

        v(x) = sum of p(x, z) * v(z) over successors z
               with order(x, z) + d(z, g) = d(x, g).

    States are processed in increasing d(., g); ties are resolved in
    topological order of the order-0 edges (successors first), which is
    well-defined because cycle removal left no order-0 cycles.
    """
    goal = view.goal_index
    taboo = view.taboo_index
    out_edges: dict[int, Row] = {}
    gamma: set[int] = set()
    for x in sorted(lambda_set):
        if view.is_terminal(x):
            continue
        row = view.succ(x)
        out_edges[x] = row
        for z, _p, _r in row:
            if z not in lambda_set and z != goal and z != taboo:
                gamma.add(z)
    for g_state in sorted(gamma):
        out_edges[g_state] = ((goal, 1.0, 0),)
    nodes = set(lambda_set) | gamma
    nodes.add(goal)
    preds: dict[int, list[Edge]] = {x: [] for x in nodes}
    preds[taboo] = []
    for x, row in out_edges.items():
        for z, p, r in row:
            preds[z].append((x, p, r))

    # distances to goal (reverse Dijkstra over orders)
    db: dict[int, Order] = {x: INFINITY for x in nodes}
    db[taboo] = INFINITY
    db[goal] = 0
    heap: list[tuple[Order, int]] = [(0, goal)]
    done: set[int] = set()
    while heap:
        dx, x = heapq.heappop(heap)
        if x in done:
            continue
        done.add(x)
        for z, _p, r in preds[x]:
            nd = r + dx
            if nd < db[z]:
                db[z] = nd
                heapq.heappush(heap, (nd, z))

    # processing order: ascending distance, ties topologically (order-0
    # successors first), remaining ties by discovery index
    order: list[int] = []
    groups: dict[Order, list[int]] = {}
    for x in nodes:
        groups.setdefault(db[x], []).append(x)
    for dval in sorted(groups, key=lambda v: (v == INFINITY, v)):
        group = set(groups[dval])
        pending: dict[int, int] = {}
        rev0: dict[int, list[int]] = {x: [] for x in group}
        for x in group:
            n = 0
            for z, _p, r in out_edges.get(x, ()):
                if r == 0 and z in group and z != x:
                    n += 1
                    rev0[z].append(x)
            pending[x] = n
        ready = [x for x in sorted(group) if pending[x] == 0]
        heapq.heapify(ready)
        emitted = 0
        while ready:
            x = heapq.heappop(ready)
            order.append(x)
            emitted += 1
            for z in rev0[x]:
                pending[z] -= 1
                if pending[z] == 0:
                    heapq.heappush(ready, z)
        if emitted != len(group):
            raise ConvergenceError("order-0 cycle survived cycle removal")

    v: dict[int, float] = {goal: 1.0, taboo: 0.0}
    for x in order:
        if x == goal:
            continue
        dx = db[x]
        total = 0.0
        for z, p, r in out_edges.get(x, ()):
            if r + db.get(z, INFINITY) == dx:
                total += p * v[z]
        v[x] = total
    return BackwardResult(frozenset(gamma), db, v, tuple(order))


@dataclass
class PreprocessResult:
    """Everything the sampler needs, plus a summary report.

    Indices refer to the frozen ``indexer``.  ``overrides`` holds the
    replacement rows produced by cycle removal; rows of all other states
    come from the model unchanged.
    """

    indexer: StateIndexer
    s_index: int
    goal_index: int
    taboo_index: int
    d_forward: dict[int, Order]
    lambda_indices: frozenset[int]
    gamma_indices: frozenset[int]
    d_backward: dict[int, Order]
    v_delta: dict[int, float]
    overrides: dict[int, Row]
    processing_order: tuple[int, ...]
    hpc_count: int
    initial_is_taboo: bool
    wall_time_ms: float

    @property
    def d_sg(self) -> Order:
        return self.d_forward[self.goal_index]

    @property
    def p_delta(self) -> float:
        """Probability of the dominant paths, v(s)."""
        return self.v_delta.get(self.s_index, 0.0)

    @property
    def lambda_size(self) -> int:
        """Number of distinct states in Lambda.

        When the initial state doubles as the regeneration state, s and the
        merged taboo node share one descriptor and are counted once.
        """
        n = len(self.lambda_indices)
        if self.initial_is_taboo and self.taboo_index in self.lambda_indices:
            n -= 1
        return n

    @property
    def gamma_size(self) -> int:
        return len(self.gamma_indices)

    def report(self) -> dict[str, object]:
        return {
            "lambda_size": self.lambda_size,
            "gamma_size": self.gamma_size,
            "d_sg": self.d_sg,
            "p_delta": self.p_delta,
            "hpc_count": self.hpc_count,
            "states_discovered": len(self.indexer),
            "wall_time_ms": round(self.wall_time_ms, 3),
        }


def preprocess(
    model: MarkovModel, state_budget: int = DEFAULT_STATE_BUDGET
) -> PreprocessResult:
    """Run both phases and package the result for sampling."""
    t0 = time.perf_counter()
    view = ChainView(model, state_budget)
    fwd = forward_phase(view)
    bwd = backward_phase(view, fwd.lambda_set)
    view.indexer.freeze()
    return PreprocessResult(
        indexer=view.indexer,
        s_index=view.s_index,
        goal_index=view.goal_index,
        taboo_index=view.taboo_index,
        d_forward=fwd.d_forward,
        lambda_indices=fwd.lambda_set,
        gamma_indices=bwd.gamma_set,
        d_backward=bwd.d_backward,
        v_delta=bwd.v_delta,
        overrides=dict(view.overrides),
        processing_order=bwd.processing_order,
        hpc_count=fwd.hpc_count,
        initial_is_taboo=model.is_taboo(model.initial_state),
        wall_time_ms=(time.perf_counter() - t0) * 1000.0,
    )
