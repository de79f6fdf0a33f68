"""Partially observable options and the hierarchical episode executor.

An option bundles an initiation predicate over beliefs, a low-level
policy mapping beliefs to primitive actions, and a termination function
returning a stop probability.  The executor runs the environment loop:
pick an option whenever none is active or the active one terminates, act
with its policy, recurse the remaining budget through
``[(budget - expected_cost)/gamma]^+``, and update the belief on the
received observation.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Protocol, Sequence

import numpy as np

from .belief import (
    FilterDiagnostics,
    ParticleBelief,
    belief_stats,
    initial_belief,
    update_belief,
)
from .model import Array, ConstrainedPOMDP, clamp_positive, discounted_return, propagate_budget

DEFAULT_STEP_CAP = 100


class NoAvailableOption(RuntimeError):
    """No option's initiation predicate admits the current belief."""


@dataclass(frozen=True)
class OptionSpec:
    """One option: where it may start, how it acts, when it stops.

    ``init`` may return a bool or a float slack (available iff > 0).
    ``termination`` returns a stop probability in [0, 1].  Options whose
    controller keeps per-execution state (e.g. fixed action scripts)
    expose ``begin``, called once when the option takes control.
    """

    label: str
    policy: Callable[[ParticleBelief], Any]
    termination: Callable[[ParticleBelief], float]
    init: Callable[[ParticleBelief], Any] = lambda b: True
    primitive: bool = False
    begin: Callable[[], None] | None = None

    def available(self, belief: ParticleBelief) -> bool:
        return float(self.init(belief)) > 0.0


class OptionSet:
    """Ordered collection of uniquely labelled options."""

    def __init__(self, options: Sequence[OptionSpec]):
        options = list(options)
        if not options:
            raise ValueError("option set must be nonempty")
        labels = [o.label for o in options]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate option labels: {labels}")
        self._options = options
        self._by_label = {o.label: o for o in options}

    def __iter__(self) -> Iterator[OptionSpec]:
        return iter(self._options)

    def __len__(self) -> int:
        return len(self._options)

    def __getitem__(self, key: int | str) -> OptionSpec:
        if isinstance(key, str):
            return self._by_label[key]
        return self._options[key]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(o.label for o in self._options)


def make_primitive_options(model: ConstrainedPOMDP) -> OptionSet:
    """One-step options wrapping each primitive action, in action order."""
    specs = []
    for a in model.actions():
        specs.append(
            OptionSpec(
                label=f"a={a}",
                policy=(lambda b, _a=a: _a),
                termination=(lambda b: 1.0),
                primitive=True,
            )
        )
    return OptionSet(specs)


def available_options(options: OptionSet, belief: ParticleBelief) -> list[OptionSpec]:
    """Options whose initiation predicate admits ``belief``, order kept."""
    return [o for o in options if o.available(belief)]


def option_terminates(option: OptionSpec, belief: ParticleBelief, rng: np.random.Generator) -> bool:
    """Bernoulli stop draw with probability termination(belief).

    Degenerate probabilities short-circuit without consuming randomness,
    so one-step options stay stream-aligned with flat primitive search.
    """
    beta = float(option.termination(belief))
    if beta >= 1.0:
        return True
    if beta <= 0.0:
        return False
    return bool(rng.random() < beta)


class OptionSelector(Protocol):
    def select_option(
        self, belief: ParticleBelief, budget: Array, rng: np.random.Generator
    ) -> OptionSpec: ...


class FixedSelector:
    """Always selects the catalog option with the given label."""

    def __init__(self, options: OptionSet, label: str):
        self._option = options[label]

    def select_option(self, belief, budget, rng) -> OptionSpec:
        return self._option


@dataclass(frozen=True)
class StepRecord:
    t: int
    option: str
    action: Any
    observation: Any
    reward: float
    cost: Array
    budget_after: Array
    belief_mean: Array
    belief_spread: Array


@dataclass(frozen=True)
class EpochRecord:
    index: int
    start_step: int
    duration: int
    option: str


@dataclass
class EpisodeLog:
    """Per-step and per-epoch records of one executed episode."""

    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    v_r: float = 0.0
    v_c: Array = field(default_factory=lambda: np.zeros(1))
    truncated: bool = False
    fallbacks: int = 0
    depletion_events: int = 0
    decisions: list[dict] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def records(self) -> list[dict]:
        """Flat record stream: one dict per step/epoch plus a final record."""
        out: list[dict] = []
        for s in self.steps:
            out.append(
                {
                    "type": "step",
                    "t": s.t,
                    "option": s.option,
                    "action": _plain(s.action),
                    "observation": _plain(s.observation),
                    "reward": s.reward,
                    "cost": s.cost.tolist(),
                    "budget_after": s.budget_after.tolist(),
                    "belief_mean": s.belief_mean.tolist(),
                    "belief_spread": s.belief_spread.tolist(),
                }
            )
        for e in self.epochs:
            out.append(
                {
                    "type": "epoch",
                    "index": e.index,
                    "start_step": e.start_step,
                    "duration": e.duration,
                    "option": e.option,
                }
            )
        out.append(
            {
                "type": "final",
                "v_r": self.v_r,
                "v_c": self.v_c.tolist(),
                "steps": self.n_steps,
                "epochs": len(self.epochs),
                "truncated": self.truncated,
                "fallbacks": self.fallbacks,
                "depletion_events": self.depletion_events,
            }
        )
        return out

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.records()) + "\n"


def parse_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def _fallback_option(options: OptionSet, belief: ParticleBelief) -> OptionSpec:
    """Least-bad option when nothing is available: max init slack if the
    predicates are soft, else the first primitive option, else the first."""
    soft = [(float(o.init(belief)), o) for o in options if not isinstance(o.init(belief), bool)]
    if soft:
        return max(soft, key=lambda p: p[0])[1]
    for o in options:
        if o.primitive:
            return o
    return options[0]


def execute_episode(
    model: ConstrainedPOMDP,
    options: OptionSet,
    selector: OptionSelector,
    rng: np.random.Generator,
    *,
    particles: int,
    budget: Array | None = None,
    step_cap: int = DEFAULT_STEP_CAP,
    belief: ParticleBelief | None = None,
    state: Any = None,
) -> EpisodeLog:
    """Run one episode of hierarchical execution and log everything.

    The true environment state is sampled from the initial distribution
    (alongside, not from, the belief particles).  Budgets recurse through
    the clamped one-step rule every underlying step using the exact
    expected instantaneous cost under the current belief.
    """
    gamma = model.discount
    remaining = clamp_positive(model.budget if budget is None else budget)
    diag = FilterDiagnostics()
    if state is None:
        state = model.unpack_state(model.sample_states(1, rng), 0)
    if belief is None:
        belief = initial_belief(model, particles, rng)

    log = EpisodeLog()
    active: OptionSpec | None = None
    epoch_start = 0
    t = 0
    rewards_costs: list[tuple[float, Array]] = []

    while not model.is_terminal(state):
        if t >= step_cap:
            log.truncated = True
            break
        if active is None or option_terminates(active, belief, rng):
            if active is not None:
                log.epochs.append(
                    EpochRecord(len(log.epochs), epoch_start, t - epoch_start, active.label)
                )
            epoch_start = t
            tic = time.perf_counter()
            try:
                active = selector.select_option(belief, remaining, rng)
            except NoAvailableOption:
                active = _fallback_option(options, belief)
                log.fallbacks += 1
            wall_ms = (time.perf_counter() - tic) * 1e3
            info = dict(getattr(selector, "last_info", None) or {})
            info["wall_ms"] = wall_ms
            info["step"] = t
            log.decisions.append(info)
            if active.begin is not None:
                active.begin()

        action = active.policy(belief)
        gen = model.step(state, action, rng)
        expected_cost = belief.weights @ model.cost_mean(belief.particles, action)
        remaining = propagate_budget(remaining, expected_cost, gamma, 1, clamp=True)
        belief = update_belief(model, belief, action, gen.observation, rng, diag)
        mean, spread = belief_summary(model, belief)
        rewards_costs.append((gen.reward, gen.cost))
        log.steps.append(
            StepRecord(
                t, active.label, action, gen.observation, gen.reward, gen.cost,
                remaining.copy(), mean, spread,
            )
        )
        state = gen.state
        t += 1

    if active is not None:
        log.epochs.append(EpochRecord(len(log.epochs), epoch_start, t - epoch_start, active.label))
    log.v_r, log.v_c = discounted_return(rewards_costs, gamma, cost_dim=model.cost_dim)
    log.depletion_events = diag.depletion_events
    return log


def belief_summary(model: ConstrainedPOMDP, belief: ParticleBelief) -> tuple[Array, Array]:
    return belief_stats(belief, features=model.features)
