"""1-D constrained robot localization with a light region.

The robot moves deterministically by one of {0, +-1, +-5, +-10}; taking 0
inside the goal band [-1, 1] pays the goal reward and ends the episode,
taking 0 elsewhere pays the miss penalty.  Every other step costs -1
reward.  Observation noise grows linearly with the distance from the
light at 10, so the robot must localize before committing to the goal.
Positions above 12 incur one unit of cost per step against a budget of
0.1, which rules out jumping straight toward the light from the initial
belief N(2, 2^2).

State batches are (n, 2) float arrays: column 0 is the position, column 1
a 0/1 terminal flag.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from ..belief import ParticleBelief
from ..model import Array, ConstrainedPOMDP, as_budget
from ..options import OptionSet, OptionSpec, make_primitive_options

_SQRT_2PI = sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class LightDarkState:
    position: float
    terminal: bool = False

    @staticmethod
    def from_row(row: Array) -> "LightDarkState":
        return LightDarkState(float(row[0]), bool(row[1] > 0.5))

    def to_row(self) -> Array:
        return np.array([self.position, 1.0 if self.terminal else 0.0])


class LightDark(ConstrainedPOMDP):
    def __init__(
        self,
        gamma: float = 0.95,
        budget: float = 0.1,
        light: float = 10.0,
        region: float = 12.0,
        goal_radius: float = 1.0,
        goal_reward: float = 100.0,
        miss_penalty: float = -100.0,
        step_reward: float = -1.0,
        region_cost: float = 1.0,
        noise_floor: float = 0.1,
        init_mean: float = 2.0,
        init_std: float = 2.0,
        depletion_jitter: float = 0.2,
    ):
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        self.discount = gamma
        self.budget = as_budget([budget])
        self.light = light
        self.region = region
        self.goal_radius = goal_radius
        self.goal_reward = goal_reward
        self.miss_penalty = miss_penalty
        self.step_reward = step_reward
        self.region_cost = region_cost
        self.noise_floor = noise_floor
        self.init_mean = init_mean
        self.init_std = init_std
        self.depletion_jitter = depletion_jitter
        self.reward_scale = abs(goal_reward)
        self._actions = (-10, -5, -1, 0, 1, 5, 10)

    def actions(self):
        return self._actions

    def sample_states(self, n: int, rng: np.random.Generator) -> Array:
        states = np.zeros((n, 2))
        states[:, 0] = rng.normal(self.init_mean, self.init_std, n)
        return states

    def sigma(self, positions):
        return np.abs(positions - self.light) + self.noise_floor

    def propagate(self, states: Array, action, rng: np.random.Generator):
        if action not in self._actions:
            raise ValueError(f"invalid action {action!r}")
        pos = states[:, 0]
        live = states[:, 1] < 0.5
        nxt = states.copy()
        nxt[live, 0] = pos[live] + action
        rewards = np.zeros(len(states))
        if action == 0:
            in_goal = np.abs(pos) <= self.goal_radius
            rewards[live] = np.where(in_goal[live], self.goal_reward, self.miss_penalty)
            nxt[live, 1] = 1.0
        else:
            rewards[live] = self.step_reward
        costs = np.zeros((len(states), 1))
        costs[:, 0] = np.where(live & (nxt[:, 0] > self.region), self.region_cost, 0.0)
        return nxt, rewards, costs

    def sample_obs(self, state, action, next_state, rng: np.random.Generator) -> float:
        pos = float(next_state[0])
        return pos + rng.normal() * float(self.sigma(pos))

    def obs_density(self, next_states: Array, observation) -> Array:
        pos = next_states[:, 0]
        sd = self.sigma(pos)
        z = (observation - pos) / sd
        return np.exp(-0.5 * z * z) / (sd * _SQRT_2PI)

    def terminal_mask(self, states: Array) -> Array:
        return states[:, 1] > 0.5

    def cost_mean(self, states: Array, action) -> Array:
        live = states[:, 1] < 0.5
        above = live & (states[:, 0] + action > self.region)
        return np.where(above, self.region_cost, 0.0)[:, None]

    def features(self, states: Array) -> Array:
        return states[:, :1]

    def jitter_states(self, states: Array, rng: np.random.Generator) -> Array:
        out = states.copy()
        live = out[:, 1] < 0.5
        out[live, 0] += rng.normal(0.0, self.depletion_jitter, int(live.sum()))
        return out


def _pos_stats(belief: ParticleBelief) -> tuple[float, float]:
    pos = belief.particles[:, 0]
    w = belief.weights
    mean = float(w @ pos)
    return mean, float(np.sqrt(w @ (pos - mean) ** 2))


def _terminal_heavy(belief: ParticleBelief) -> bool:
    return belief.terminal_mass >= 0.5


def make_goto_goal(model: LightDark) -> OptionSpec:
    """Greedy walk of the belief mean to the goal; emits the stop action
    once no move improves, so it runs an episode to completion."""
    acts = model.actions()

    def policy(belief: ParticleBelief):
        mean, _ = _pos_stats(belief)
        return min(acts, key=lambda a: abs(mean + a))

    def termination(belief: ParticleBelief) -> float:
        return 1.0 if _terminal_heavy(belief) else 0.0

    return OptionSpec("GoToGoal", policy, termination)


def _make_localize(model: LightDark, label: str, cap_fn, spread_stop: float) -> OptionSpec:
    """Move the belief mean toward the light, subject to a per-step cap on
    where the mean may land; stop once the belief spread is small."""
    acts = [a for a in model.actions() if a != 0]
    light = model.light

    def policy(belief: ParticleBelief):
        mean, spread = _pos_stats(belief)
        cap = cap_fn(mean, spread)
        feasible = [a for a in acts if mean + a <= cap]
        if not feasible:
            return -1
        return min(feasible, key=lambda a: abs(mean + a - light))

    def termination(belief: ParticleBelief) -> float:
        if _terminal_heavy(belief):
            return 1.0
        _, spread = _pos_stats(belief)
        return 1.0 if spread < spread_stop else 0.0

    return OptionSpec(label, policy, termination)


def make_localize_fast(model: LightDark, spread_stop: float = 0.3) -> OptionSpec:
    cap = model.region - 0.1
    return _make_localize(model, "LocalizeFast", lambda m, s: cap, spread_stop)


def make_localize_from_below(model: LightDark, spread_stop: float = 0.3) -> OptionSpec:
    light = model.light
    return _make_localize(model, "LocalizeFromBelow", lambda m, s: light, spread_stop)


def make_localize_safe(
    model: LightDark, spread_stop: float = 0.3, margin: float = 2.0, tag: str = ""
) -> OptionSpec:
    """Localizer that also respects the cost region: it never commands a
    move that puts mean + margin*spread above the region boundary."""
    light, region = model.light, model.region
    label = f"LocalizeSafe[{tag or format(spread_stop, 'g')}]"
    return _make_localize(
        model, label, lambda m, s: min(light, region - margin * s), spread_stop
    )


def make_random_macro(model: LightDark, label: str, script: tuple) -> OptionSpec:
    """Fixed script of non-terminal actions, one per step; terminates after
    the script is exhausted.  Keeps an epoch-local step counter."""
    state = {"i": 0}

    def begin() -> None:
        state["i"] = 0

    def policy(belief: ParticleBelief):
        a = script[min(state["i"], len(script) - 1)]
        state["i"] += 1
        return a

    def termination(belief: ParticleBelief) -> float:
        if _terminal_heavy(belief):
            return 1.0
        return 1.0 if state["i"] >= len(script) else 0.0

    return OptionSpec(label, policy, termination, begin=begin)


def base_catalog(model: LightDark) -> list[OptionSpec]:
    return [
        make_goto_goal(model),
        make_localize_fast(model),
        make_localize_from_below(model),
        make_localize_safe(model, 0.3),
    ]


def make_options(model: LightDark, variant: str, seed: int = 0) -> OptionSet:
    """Option catalogs by name.

    base4          GoToGoal + the three localizers
    feasible3      GoToGoal + two LocalizeSafe variants (all safe from b0)
    primitive      one-step options over the raw actions
    uncertainty-N  base4 plus LocalizeSafe variants with sampled stop spreads
    random-N       base4 plus fixed scripts of three random non-stop actions
    """
    if variant == "base4":
        return OptionSet(base_catalog(model))
    if variant == "feasible3":
        return OptionSet(
            [
                make_goto_goal(model),
                make_localize_safe(model, 0.3),
                make_localize_safe(model, 0.6),
            ]
        )
    if variant == "primitive":
        return make_primitive_options(model)
    if variant.startswith("uncertainty-") or variant.startswith("random-"):
        kind, _, size_text = variant.partition("-")
        size = int(size_text)
        if size < 4:
            raise ValueError(f"catalog size must be >= 4, got {size}")
        specs = base_catalog(model)
        rng = np.random.default_rng([seed, 0xC0B5])
        if kind == "uncertainty":
            spreads = np.geomspace(0.15, 1.2, size - 4) if size > 4 else []
            for i, s in enumerate(spreads):
                specs.append(make_localize_safe(model, float(s), tag=f"u{i}:{s:.3g}"))
        else:
            moves = [a for a in model.actions() if a != 0]
            for i in range(size - 4):
                script = tuple(moves[j] for j in rng.integers(0, len(moves), 3))
                specs.append(make_random_macro(model, f"Macro[{i}:{script}]", script))
        return OptionSet(specs)
    raise ValueError(f"unknown option catalog {variant!r}")
