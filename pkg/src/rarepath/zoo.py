"""Benchmark models implementing the MarkovModel contract.

* a birth-death chain where each step toward the goal has probability eps;
* multicomponent repair systems with one active component per type
  (spares), dedicated or deferred group repair, and optional distinct
  spare-failure rates;
* a distributed database system: 2 processors, 2 controller sets of 2, and
  6 disk clusters of 6, with four repair strategies (dedicated units, one
  unit with disk or processor priority, one unit serving in FCFS order).

All models are immutable; rates are emitted symbolically as
prefactor * eps**order so preprocessing sees exact rarity orders.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Sequence

from rarepath.errors import ConfigError
from rarepath.model import MarkovModel, Transition


class BirthDeathChain(MarkovModel):
    """Linear chain s -> 1 -> ... -> levels (goal); drops lead to t.

    Each up-step has probability eps (order 1), each down-step 1 - eps
    (order 0); from level 1 the down-step regenerates.  The model emits
    probabilities directly, exercising the non-CTMC path of the contract.
    """

    emits_rates = False

    def __init__(self, levels: int = 5, epsilon: float = 0.1):
        if levels < 2:
            raise ConfigError("need at least two levels")
        self.levels = levels
        self.epsilon = epsilon

    @property
    def initial_state(self) -> Any:
        return "s"

    def is_goal(self, state: Any) -> bool:
        return state == self.levels

    def is_taboo(self, state: Any) -> bool:
        return state == "t"

    def successors(self, state: Any) -> list[Transition]:
        if state == "s":
            return [Transition(1, 1.0, 0)]
        eps = self.epsilon
        down = state - 1 if state > 1 else "t"
        return [
            Transition(state + 1, eps, 1),
            Transition(down, 1.0 - eps, 0),
        ]


def make_birth_death_chain(levels: int = 5, epsilon: float = 0.1) -> BirthDeathChain:
    return BirthDeathChain(levels, epsilon)


@dataclass(frozen=True)
class ComponentType:
    """One component type of a multicomponent repair system.

    One component is active at a time, the others are cold spares.  The
    active component fails at ``fail_prefactor * eps**fail_order``; once at
    least one component has failed the (distinct, optional) spare rate
    applies instead.  Repair starts when ``repair_threshold`` components
    are down (deferred repair) and fixes either one component or, with
    ``group_repair``, all of them at once.
    """

    count: int
    fail_prefactor: float = 1.0
    fail_order: int = 1
    spare_prefactor: float | None = None
    spare_order: int | None = None
    repair_rate: float = 1.0
    repair_threshold: int = 1
    group_repair: bool = False

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ConfigError("component count must be >= 1")
        if not 1 <= self.repair_threshold <= self.count:
            raise ConfigError("repair threshold must be in [1, count]")
        if self.fail_prefactor <= 0 or self.repair_rate <= 0:
            raise ConfigError("rates must be positive")


class MulticomponentModel(MarkovModel):
    """Failure/repair system over several component types.

    States are tuples of failed-component counts; the system fails (goal)
    when any type is fully failed, and regenerates on returning to the
    all-up state.
    """

    emits_rates = True

    def __init__(self, types: Sequence[ComponentType], epsilon: float):
        self.types = tuple(types)
        self.epsilon = epsilon

    @property
    def initial_state(self) -> tuple[int, ...]:
        return (0,) * len(self.types)

    def is_goal(self, state: Any) -> bool:
        return any(x >= ct.count for x, ct in zip(state, self.types))

    def is_taboo(self, state: Any) -> bool:
        return all(x == 0 for x in state)

    def successors(self, state: Any) -> list[Transition]:
        eps = self.epsilon
        out: list[Transition] = []
        for i, (x, ct) in enumerate(zip(state, self.types)):
            if x < ct.count:
                if x >= 1 and ct.spare_prefactor is not None:
                    pre, order = ct.spare_prefactor, ct.spare_order
                else:
                    pre, order = ct.fail_prefactor, ct.fail_order
                target = state[:i] + (x + 1,) + state[i + 1 :]
                out.append(Transition(target, pre * eps**order, order))
            if x >= ct.repair_threshold:
                new_x = 0 if ct.group_repair else x - 1
                target = state[:i] + (new_x,) + state[i + 1 :]
                out.append(Transition(target, ct.repair_rate, 0))
        return out

    def sojourn_rate(self, state: Any) -> float:
        return sum(t.weight for t in self.successors(state))


def make_two_type(
    types: Sequence[ComponentType], epsilon: float
) -> MulticomponentModel:
    """Multicomponent system from explicit per-type specs."""
    return MulticomponentModel(types, epsilon)


def two_type_basic(
    k1: int = 4, k2: int = 4, c: float = 1.0, epsilon: float = 0.01
) -> MulticomponentModel:
    """Two types with dedicated repair; type-1 failures are c times faster."""
    return MulticomponentModel(
        (
            ComponentType(count=k1, fail_prefactor=c),
            ComponentType(count=k2, fail_prefactor=1.0),
        ),
        epsilon,
    )


def two_type_deferred(
    k1: int = 5, k2: int = 2, c: float = 1.0 / 50.0, epsilon: float = 0.01
) -> MulticomponentModel:
    """Type 1 under deferred (threshold 2) group repair; type 2 dedicated.

    The deferral makes the states with one type-1 failure an order-0 cycle
    (no repair is active there), the canonical high-probability-cycle
    example.
    """
    return MulticomponentModel(
        (
            ComponentType(
                count=k1, fail_prefactor=c, repair_threshold=2, group_repair=True
            ),
            ComponentType(count=k2, fail_prefactor=1.0),
        ),
        epsilon,
    )


def two_type_unbalanced(
    k1: int = 5, k2: int = 3, epsilon: float = 0.01
) -> MulticomponentModel:
    """Deferred-group variant with slower spare failures for type 1.

    The first type-1 component fails at order 1, its spares at order 2,
    which makes the dominant path run through the order-0 cycle and is the
    standard example where failure-biasing measures misjudge the rare
    paths.
    """
    return MulticomponentModel(
        (
            ComponentType(
                count=k1,
                fail_prefactor=1.0,
                fail_order=1,
                spare_prefactor=1.0,
                spare_order=2,
                repair_threshold=2,
                group_repair=True,
            ),
            ComponentType(count=k2, fail_prefactor=1.0),
        ),
        epsilon,
    )


DDS_STRATEGIES = ("dedicated", "disk_priority", "proc_priority", "fcfs")

# component types: 0 processors, 1-2 controller sets, 3-8 disk clusters
_DDS_COUNTS = (2, 2, 2, 6, 6, 6, 6, 6, 6)
_DDS_FAIL_PREFACTOR = (0.5, 0.5, 0.5) + (1.0 / 6.0,) * 6
_DDS_FAIL_ORDER = 2
_DDS_REPAIR_ORDER = (0, 0, 0) + (1,) * 6  # disks repair at rate eps
_DDS_DOWN_LIMIT = (2, 2, 2) + (4,) * 6  # failed components meaning "down"


class DdsModel(MarkovModel):
    """Distributed database system with nine component types.

    The system is down when both processors fail, both controllers of a
    set fail, or four disks of one cluster fail.  Failure rates are linear
    in the number of working components; repair follows the chosen
    strategy.  FCFS states carry the chronological list of failed
    component types, other strategies a count vector.
    """

    emits_rates = True

    def __init__(self, strategy: str = "dedicated", epsilon: float = 0.01):
        if strategy not in DDS_STRATEGIES:
            raise ConfigError(f"unknown DDS strategy {strategy!r}")
        self.strategy = strategy
        self.epsilon = epsilon

    @property
    def initial_state(self) -> tuple:
        if self.strategy == "fcfs":
            return ()
        return (0,) * 9

    def _counts(self, state: tuple) -> tuple[int, ...]:
        if self.strategy != "fcfs":
            return state
        counts = [0] * 9
        for i in state:
            counts[i] += 1
        return tuple(counts)

    def is_goal(self, state: tuple) -> bool:
        counts = self._counts(state)
        return any(x >= lim for x, lim in zip(counts, _DDS_DOWN_LIMIT))

    def is_taboo(self, state: tuple) -> bool:
        return len(state) == 0 or all(x == 0 for x in state)

    def _repairs(self, state: tuple, counts: tuple[int, ...]) -> list[Transition]:
        eps = self.epsilon
        strategy = self.strategy
        if strategy == "fcfs":
            head = state[0]
            order = _DDS_REPAIR_ORDER[head]
            return [Transition(state[1:], eps**order, order)]
        failed = [i for i, x in enumerate(counts) if x > 0]
        if strategy == "dedicated":
            chosen = failed
        elif strategy == "disk_priority":
            chosen = [max(failed)]
        else:  # proc_priority
            chosen = [min(failed)]
        out = []
        for i in chosen:
            order = _DDS_REPAIR_ORDER[i]
            target = counts[:i] + (counts[i] - 1,) + counts[i + 1 :]
            out.append(Transition(target, eps**order, order))
        return out

    def successors(self, state: tuple) -> list[Transition]:
        eps = self.epsilon
        counts = self._counts(state)
        out: list[Transition] = []
        for i, x in enumerate(counts):
            working = _DDS_COUNTS[i] - x
            if working <= 0:
                continue
            rate = working * _DDS_FAIL_PREFACTOR[i] * eps**_DDS_FAIL_ORDER
            if self.strategy == "fcfs":
                target: tuple = state + (i,)
            else:
                target = counts[:i] + (x + 1,) + counts[i + 1 :]
            out.append(Transition(target, rate, _DDS_FAIL_ORDER))
        if any(counts):
            out.extend(self._repairs(state, counts))
        return out

    def sojourn_rate(self, state: tuple) -> float:
        return sum(t.weight for t in self.successors(state))


def make_dds(strategy: str = "dedicated", epsilon: float = 0.01) -> DdsModel:
    return DdsModel(strategy, epsilon)


def build_model(name: str, epsilon: float, params: dict[str, str]) -> MarkovModel:
    """CLI registry: construct a model by name with string parameters."""
    p = dict(params)

    def pop_int(key: str, default: int) -> int:
        return int(p.pop(key, default))

    def pop_float(key: str, default: float) -> float:
        return float(p.pop(key, default))

    if name == "chain":
        model: MarkovModel = make_birth_death_chain(pop_int("levels", 5), epsilon)
    elif name == "two-type":
        model = two_type_basic(
            pop_int("k1", 4), pop_int("k2", 4), pop_float("c", 1.0), epsilon
        )
    elif name == "two-type-deferred":
        model = two_type_deferred(
            pop_int("k1", 5), pop_int("k2", 2), pop_float("c", 1.0 / 50.0), epsilon
        )
    elif name == "two-type-unbalanced":
        model = two_type_unbalanced(pop_int("k1", 5), pop_int("k2", 3), epsilon)
    elif name == "dds":
        model = make_dds(str(p.pop("strategy", "dedicated")), epsilon)
    else:
        raise ConfigError(f"unknown model {name!r}")
    if p:
        raise ConfigError(f"unknown parameters for {name}: {sorted(p)}")
    return model


MODEL_NAMES = ("chain", "two-type", "two-type-deferred", "two-type-unbalanced", "dds")
