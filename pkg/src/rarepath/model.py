"""Markov model contract, CTMC embedding, and state indexing.

A model describes a discrete-time Markov chain implicitly: an initial
state, goal/taboo predicates, and a successor function.  Goal states are
merged into a single absorbing node g, taboo states into a single node t;
neither is ever expanded.  Successor weights may be CTMC rates (embedded on
the fly) or DTMC probabilities.
"""

from __future__ import annotations

import abc
import enum
from dataclasses import dataclass
from typing import Any, Hashable, Sequence

from rarepath.errors import ModelError
from rarepath.orders import assign_order

State = Hashable


class Terminal(enum.Enum):
    """Virtual merged absorbing nodes."""

    GOAL = "goal"
    TABOO = "taboo"


GOAL = Terminal.GOAL
TABOO = Terminal.TABOO


@dataclass(frozen=True)
class Transition:
    """One outgoing transition of a state.

    ``weight`` is a CTMC rate if the model sets ``emits_rates`` (the usual
    case for the built-in models), otherwise a probability.  ``order`` is
    the rarity order of the rate/probability; ``None`` requests automatic
    assignment from the embedded probability.
    """

    target: State
    weight: float
    order: int | None = 0


class MarkovModel(abc.ABC):
    """Implicit Markov chain with merged goal and taboo sets."""

    #: successor weights are CTMC rates (embed) rather than probabilities
    emits_rates: bool = True

    #: rarity parameter; used for automatic order assignment when a
    #: transition carries ``order=None``
    epsilon: float = 0.1

    @property
    @abc.abstractmethod
    def initial_state(self) -> State: ...

    @abc.abstractmethod
    def is_goal(self, state: State) -> bool: ...

    @abc.abstractmethod
    def is_taboo(self, state: State) -> bool: ...

    @abc.abstractmethod
    def successors(self, state: State) -> Sequence[Transition]: ...

    def sojourn_rate(self, state: State) -> float:
        """CTMC exit rate of ``state`` (only needed for time measures)."""
        raise NotImplementedError


def embed_ctmc(transitions: Sequence[Transition]) -> list[Transition]:
    """Embed CTMC rates as jump probabilities.

    prob_i = rate_i / sum(rates); output orders are shifted so the most
    probable transition class has order 0 (order_i - min order).
    """
    if not transitions:
        raise ModelError("state has no outgoing transitions")
    total = 0.0
    for t in transitions:
        if t.weight <= 0.0:
            raise ModelError(f"non-positive rate {t.weight} to {t.target!r}")
        if t.order is not None and t.order < 0:
            raise ModelError(f"negative order {t.order} to {t.target!r}")
        total += t.weight
    base = min((t.order for t in transitions if t.order is not None), default=0)
    return [
        Transition(
            t.target,
            t.weight / total,
            None if t.order is None else t.order - base,
        )
        for t in transitions
    ]


def resolve_transitions(model: MarkovModel, state: State) -> list[tuple[Any, float, int]]:
    """Expand one state into (target, probability, order) triples.

    Applies CTMC embedding (or probability validation), automatic order
    assignment, and goal/taboo merging of targets.
    """
    raw = list(model.successors(state))
    if not raw:
        raise ModelError(f"state {state!r} has no outgoing transitions")
    if model.emits_rates:
        emb = embed_ctmc(raw)
    else:
        total = sum(t.weight for t in raw)
        if abs(total - 1.0) > 1e-9:
            raise ModelError(f"probabilities of {state!r} sum to {total}, not 1")
        for t in raw:
            if not 0.0 < t.weight <= 1.0:
                raise ModelError(f"bad probability {t.weight} from {state!r}")
        emb = list(raw)
    if any(t.order is None for t in emb):
        orders = [assign_order(t.weight, model.epsilon) for t in emb]
        base = min(orders)
        emb = [
            Transition(t.target, t.weight, o - base) for t, o in zip(emb, orders)
        ]
    out: list[tuple[Any, float, int]] = []
    for t in emb:
        if model.is_goal(t.target):
            tgt: Any = GOAL
        elif model.is_taboo(t.target):
            tgt = TABOO
        else:
            tgt = t.target
        out.append((tgt, t.weight, t.order))
    return out


class StateIndexer:
    """Bijection between discovered state descriptors and dense ints.

    Indices are assigned in first-discovery order, which also serves as the
    deterministic tie-breaking order of the preprocessing phases.
    """

    def __init__(self) -> None:
        self._index: dict[Any, int] = {}
        self._states: list[Any] = []
        self._frozen = False

    def __len__(self) -> int:
        return len(self._states)

    def __contains__(self, state: Any) -> bool:
        return state in self._index

    def index(self, state: Any) -> int:
        """Index of ``state``, assigning a fresh one if unseen."""
        idx = self._index.get(state)
        if idx is None:
            if self._frozen:
                raise KeyError(f"indexer frozen; unknown state {state!r}")
            idx = len(self._states)
            self._index[state] = idx
            self._states.append(state)
        return idx

    def lookup(self, state: Any) -> int | None:
        """Index of ``state`` or None, never assigning."""
        return self._index.get(state)

    def state(self, idx: int) -> Any:
        return self._states[idx]

    def freeze(self) -> None:
        self._frozen = True
