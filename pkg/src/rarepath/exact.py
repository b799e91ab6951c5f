"""Exact hitting probabilities by numerical linear solve.

Enumerates the reachable merged state space and solves

    pi(x) = sum over successors z of p(x, z) * pi(z),  pi(g) = 1, pi(t) = 0

with Gauss-Seidel iteration; each sweep is one sparse lower-triangular
solve, so large spaces stay fast.  Serves as the reference oracle that the
simulation estimators are validated against.
"""

from __future__ import annotations

from collections import deque
from typing import Any

import numpy as np
from scipy.sparse import csr_matrix, tril, triu
from scipy.sparse.linalg import spsolve_triangular

from rarepath.errors import ConvergenceError, StateBudgetExceeded
from rarepath.model import GOAL, TABOO, MarkovModel, resolve_transitions
from rarepath.preproc import PreprocessResult

DEFAULT_STATE_CAP = 2_000_000


def _rows_source(model: MarkovModel, result: PreprocessResult | None):
    """Successor function over descriptors, reduced when requested."""
    if result is None:
        return lambda state: resolve_transitions(model, state)

    def reduced(state: Any):
        idx = result.indexer.lookup(state)
        if idx is not None and idx in result.overrides:
            return [
                (result.indexer.state(z), p, r)
                for z, p, r in result.overrides[idx]
            ]
        return resolve_transitions(model, state)

    return reduced


def exact_hitting_probability(
    model: MarkovModel,
    result: PreprocessResult | None = None,
    tol: float = 1e-12,
    state_cap: int = DEFAULT_STATE_CAP,
    max_iter: int = 200_000,
) -> tuple[float, dict[Any, float]]:
    """Probability of reaching the goal before the taboo state.

    Returns (pi(s), pi for every reachable non-terminal state).  Pass the
    preprocessing result to solve over the reduced chain instead; cycle
    removal must leave hitting probabilities unchanged, which the test
    suite checks against this oracle.
    """
    succ = _rows_source(model, result)
    index: dict[Any, int] = {model.initial_state: 0}
    states: list[Any] = [model.initial_state]
    rows: list[list[tuple[int, float]]] = []  # -1 = goal, -2 = taboo
    queue = deque([model.initial_state])
    while queue:
        state = queue.popleft()
        row: list[tuple[int, float]] = []
        for target, p, _r in succ(state):
            if target is GOAL:
                row.append((-1, p))
            elif target is TABOO:
                row.append((-2, p))
            else:
                j = index.get(target)
                if j is None:
                    j = len(states)
                    if j >= state_cap:
                        raise StateBudgetExceeded(
                            f"more than {state_cap} reachable states"
                        )
                    index[target] = j
                    states.append(target)
                    queue.append(target)
                row.append((j, p))
        rows.append(row)

    n = len(states)
    b = np.zeros(n)
    data, ri, ci = [], [], []
    for i, row in enumerate(rows):
        diag = 1.0
        for j, p in row:
            if j == -1:
                b[i] += p
            elif j == -2:
                continue
            elif j == i:
                diag -= p
            else:
                data.append(-p)
                ri.append(i)
                ci.append(j)
        data.append(diag)
        ri.append(i)
        ci.append(i)
    a = csr_matrix((data, (ri, ci)), shape=(n, n))
    lower = tril(a, k=0, format="csr")
    upper = triu(a, k=1, format="csr")

    x = np.zeros(n)
    for _ in range(max_iter):
        rhs = b - upper.dot(x)
        x_new = spsolve_triangular(lower, rhs, lower=True)
        diff = np.max(np.abs(x_new - x)) if n else 0.0
        x = x_new
        if diff < tol:
            break
    else:
        raise ConvergenceError("hitting-probability solve did not converge")
    pi = {state: float(x[i]) for state, i in index.items()}
    return float(x[0]), pi
