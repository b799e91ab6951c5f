"""Shared oracles and helpers.

The oracles here deliberately avoid the production code paths they are
used to check: hitting probabilities come from a dense linear solve over
an explicitly enumerated chain, distances from Bellman-Ford over the same
enumeration, and dominant-path probabilities from direct enumeration with
an order budget.
"""

from __future__ import annotations

import math
from collections import deque
from functools import lru_cache

import numpy as np
import pytest

from rarepath.model import GOAL, TABOO, MarkovModel, resolve_transitions
from rarepath.preproc import PreprocessResult


def enumerate_chain(
    model: MarkovModel,
    result: PreprocessResult | None = None,
    mode: str = "reduced",
    seeds=None,
    limit: int | None = None,
):
    """Breadth-first enumeration of the chain in descriptor space.

    Returns a dict mapping each non-terminal descriptor to a list of
    (target, p, r) with GOAL/TABOO sentinels for terminal jumps.  With a
    preprocessing result, mode "reduced" uses the replacement rows from
    cycle removal; mode "union" keeps a removed cycle member's original
    row alongside its replacement, which models how the forward search
    sees the chain (members are entered through their original order-0
    edges even after their own rows have been replaced).
    """
    overrides: dict = {}
    if result is not None:
        for idx, row in result.overrides.items():
            desc_row = []
            for z, p, r in row:
                if z == result.goal_index:
                    desc_row.append((GOAL, p, r))
                elif z == result.taboo_index:
                    desc_row.append((TABOO, p, r))
                else:
                    desc_row.append((result.indexer.state(z), p, r))
            overrides[result.indexer.state(idx)] = desc_row

    rows: dict = {}
    start = list(seeds) if seeds is not None else [model.initial_state]
    queue = deque(start)
    seen = set(start)
    while queue:
        if limit is not None and len(rows) >= limit:
            break
        x = queue.popleft()
        row = overrides.get(x)
        if row is None:
            row = resolve_transitions(model, x)
        elif mode == "union":
            row = row + resolve_transitions(model, x)
        rows[x] = row
        for z, _p, _r in row:
            if z in (GOAL, TABOO) or z in seen:
                continue
            seen.add(z)
            queue.append(z)
    return rows


def dense_hitting_probability(model: MarkovModel, result=None):
    """Goal-before-taboo probability per state via a dense linear solve."""
    rows = enumerate_chain(model, result)
    nodes = list(rows)
    pos = {x: i for i, x in enumerate(nodes)}
    a = np.eye(len(nodes))
    b = np.zeros(len(nodes))
    for x, row in rows.items():
        i = pos[x]
        for z, p, _r in row:
            if z is GOAL:
                b[i] += p
            elif z is TABOO:
                pass
            else:
                a[i, pos[z]] -= p
    sol = np.linalg.solve(a, b)
    return {x: float(sol[pos[x]]) for x in nodes}


def bellman_ford_distance(model: MarkovModel, result=None):
    """Order distance d(s, x) for every reachable state, plus d(s, GOAL).

    Iterates edge relaxations to a fixed point; independent of the heap
    discipline used by the production forward phase.  Uses the union view
    of cycle-removal overrides (see ``enumerate_chain``).
    """
    rows = enumerate_chain(model, result, mode="union")
    dist: dict = {model.initial_state: 0}
    dist_goal = math.inf
    changed = True
    while changed:
        changed = False
        for x, row in rows.items():
            dx = dist.get(x)
            if dx is None:
                continue
            for z, _p, r in row:
                nd = dx + r
                if z is GOAL:
                    if nd < dist_goal:
                        dist_goal = nd
                        changed = True
                elif z is TABOO:
                    continue
                elif nd < dist.get(z, math.inf):
                    dist[z] = nd
                    changed = True
    return dist, dist_goal


def brute_force_dominant_mass(model: MarkovModel, result: PreprocessResult):
    """Independent recomputation of the dominant-path probabilities.

    With frontier shortcuts (frontier state -> goal, probability 1,
    order 0) in place, W(x, b) is the total probability of paths from x
    to the goal whose summed order is exactly b.  The reference value for
    state x is then W(x, db(x)) with db the production backward distance
    -- checked separately against Bellman-Ford -- so this exercises only
    the path-mass computation, not the distances.

    The recursion terminates because order-0 edges form a DAG once cycles
    have been removed and b decreases on every positive-order edge.
    """
    seeds = [model.initial_state] + [
        result.indexer.state(i)
        for i in sorted(result.lambda_indices | result.gamma_indices)
        if i not in (result.goal_index, result.taboo_index)
    ]
    rows = enumerate_chain(model, result, seeds=seeds)
    gamma_desc = {result.indexer.state(i) for i in result.gamma_indices}

    @lru_cache(maxsize=None)
    def mass(x, budget):
        if budget < 0:
            return 0.0
        if x is GOAL:
            return 1.0 if budget == 0 else 0.0
        if x is TABOO:
            return 0.0
        if x in gamma_desc:
            # shortcut: the frontier jumps straight to the goal at order 0
            return 1.0 if budget == 0 else 0.0
        total = 0.0
        for z, p, r in rows[x]:
            if r <= budget:
                total += p * mass(z, budget - r)
        return total

    out = {}
    for idx in result.lambda_indices:
        if idx in (result.goal_index, result.taboo_index):
            continue
        db = result.d_backward.get(idx)
        if db is None or not math.isfinite(db):
            continue
        out[idx] = mass(result.indexer.state(idx), db)
    mass.cache_clear()
    return out


@pytest.fixture(scope="session")
def tol():
    return 1e-12


#: one human-readable verdict line per acceptance criterion, echoed at the
#: end of the run (see test_acceptance.py)
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
