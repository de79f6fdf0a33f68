"""Lagrangian Monte Carlo tree search over options on belief states.

One search tree is built per decision.  Each of the n queries runs one
recursive simulation: option children are added under progressive
widening and picked by a Lagrangian UCB score Q - lambda^T Q_C plus an
exploration bonus; chosen options are imagined to termination through the
particle-filter generative step, producing semi-Markov transitions
(b', reward, cost, tau) that are themselves progressively widened; values
back up as V = r + gamma^tau V'.  Between queries the dual vector ascends
on the greedy root child's constraint violation.  The final answer is the
root option with the best reward value among those whose cost value fits
the budget.

Budgets recurse unclamped inside the tree, (budget - cost)/gamma^tau, so
a negative entry keeps signalling infeasibility to deeper selections; the
positive part is only taken where an option is sampled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import log, sqrt
from typing import Any

import numpy as np

from .belief import FilterDiagnostics, ParticleBelief
from .model import Array, ConstrainedPOMDP, clamp_positive
from .options import (
    NoAvailableOption,
    OptionSet,
    OptionSpec,
    available_options,
    option_terminates,
)
from .belief import pf_generative_step


@dataclass
class PlannerConfig:
    """Search hyperparameters; widening uses child_count <= k * visits**alpha."""

    queries: int = 100
    max_depth: int = 20
    exploration: float = 40.0
    k_options: float = 10.0
    alpha_options: float = 0.5
    k_transitions: float = 4.0
    alpha_transitions: float = 0.1
    particles: int = 50
    lambda_init: float = 0.0
    dual_step: float = 1.0
    dual_step_scale: float | None = None  # None: use the model's reward scale
    warm_start: bool = True
    gamma: float | None = None  # None: use the model's discount
    rollout_depth: int | None = None
    estimator: str = "rollout"  # or "zero"

    def __post_init__(self) -> None:
        if self.queries < 1 or self.max_depth < 1:
            raise ValueError("queries and max_depth must be >= 1")
        if self.k_options <= 0 or self.k_transitions <= 0:
            raise ValueError("widening k parameters must be > 0")
        if not (0.0 < self.alpha_options < 1.0 and 0.0 < self.alpha_transitions < 1.0):
            raise ValueError("widening alpha parameters must lie in (0, 1)")
        if self.exploration < 0:
            raise ValueError("exploration constant must be >= 0")
        if self.lambda_init < 0:
            raise ValueError("lambda_init must be >= 0")
        if self.particles < 1:
            raise ValueError("particles must be >= 1")
        if self.dual_step <= 0:
            raise ValueError("dual_step must be > 0")
        if self.estimator not in ("rollout", "zero"):
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class SemiMarkovTransition:
    """Option-induced belief jump with its within-option discounted sums."""

    belief: ParticleBelief
    reward: float
    cost: Array
    tau: int
    steps: tuple | None = None  # raw per-step (reward, cost) when tracing


@dataclass(frozen=True)
class DualState:
    lam: Array
    iteration: int = 0

    @property
    def active(self) -> bool:
        return bool(self.lam.any())


def dual_update(dual: DualState, q_cost: Array, budget: Array, step_size: float) -> DualState:
    """Projected ascent: lam <- [lam + step * (Q_C - budget)]^+."""
    if step_size <= 0:
        raise ValueError("dual step size must be > 0")
    lam = np.maximum(dual.lam + step_size * (q_cost - budget), 0.0)
    return DualState(lam, dual.iteration + 1)


def sample_next_option(
    options: OptionSet,
    belief: ParticleBelief,
    budget_clamped: Array,
    existing: set[str],
    rng: np.random.Generator,
    available: list[OptionSpec] | None = None,
) -> OptionSpec:
    """Uniform draw over available options not yet in the node's children;
    once exhausted, a uniform redraw over all available options (which
    returns an existing child and leaves the child set unchanged).

    The clamped budget is part of the sampling interface for budget-aware
    proposal strategies; the default sampler only filters by availability.
    ``available`` short-circuits the availability scan when the caller has
    already evaluated it for this belief.
    """
    avail = available_options(options, belief) if available is None else available
    if not avail:
        raise NoAvailableOption("no option is available from this belief")
    fresh = [o for o in avail if o.label not in existing]
    pool = fresh if fresh else avail
    return pool[int(rng.integers(len(pool)))]


class _OptionNode:
    __slots__ = ("option", "visits", "q", "qc0", "cost_sum", "transitions", "children")

    def __init__(self, option: OptionSpec, cost_dim: int):
        self.option = option
        self.visits = 0
        self.q = 0.0
        self.qc0 = 0.0  # first cost channel as a float, for the hot UCB path
        self.cost_sum = np.zeros(cost_dim)
        self.transitions: list[SemiMarkovTransition] = []
        self.children: list[_BeliefNode] = []

    @property
    def q_cost(self) -> Array:
        """Mean backed-up cost; running sums avoid per-visit vector math."""
        if self.visits == 0:
            return self.cost_sum
        return self.cost_sum / self.visits


class _BeliefNode:
    __slots__ = ("belief", "visits", "children", "labels", "available")

    def __init__(self, belief: ParticleBelief):
        self.belief = belief
        self.visits = 0
        self.children: list[_OptionNode] = []
        self.labels: set[str] = set()
        # availability depends only on the (immutable) belief, so it is
        # evaluated once per node
        self.available: list | None = None


def iter_belief_nodes(root: _BeliefNode):
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        for onode in node.children:
            stack.extend(onode.children)


class OptionPlanner:
    """Per-decision tree search; implements the option-selector protocol."""

    def __init__(self, model: ConstrainedPOMDP, options: OptionSet, config: PlannerConfig):
        self.model = model
        self.options = options
        self.cfg = config
        self.gamma = model.discount if config.gamma is None else config.gamma
        scale = model.reward_scale if config.dual_step_scale is None else config.dual_step_scale
        self._dual_step0 = config.dual_step * scale
        self._cost_dim = model.cost_dim
        self._zero = np.zeros(model.cost_dim)  # shared; never mutated
        self._option_list = list(options)
        self._n_options = len(self._option_list)
        default_init = OptionSpec.__dataclass_fields__["init"].default
        self._trivial_init = all(o.init is default_init for o in options)
        self._carry_lam: Array | None = None
        self.last_tree: _BeliefNode | None = None
        self.last_info: dict | None = None
        self.trace: list | None = None  # set to [] to record per-query traces
        self.record_steps = False
        self._step_log: list | None = None
        self.diagnostics = FilterDiagnostics()

    def reset(self) -> None:
        self._carry_lam = None

    # -- top level -----------------------------------------------------

    def select_option(
        self, belief: ParticleBelief, budget: Array, rng: np.random.Generator
    ) -> OptionSpec:
        cfg = self.cfg
        budget = np.asarray(budget, dtype=np.float64)
        root = _BeliefNode(belief)
        self.last_tree = root
        lam0 = np.full(self._cost_dim, cfg.lambda_init, dtype=np.float64)
        if cfg.warm_start and self._carry_lam is not None:
            lam0 = self._carry_lam
        dual = DualState(lam0.copy())
        for i in range(1, cfg.queries + 1):
            v, c = self.simulate(root, budget, cfg.max_depth, dual, rng)
            greedy = self._argmax_lagrangian(root.children, dual.lam)
            dual = dual_update(dual, greedy.q_cost, budget, self._dual_step0 / sqrt(i))
            if self.trace is not None:
                self.trace.append(
                    (float(v), tuple(c), greedy.option.label, tuple(dual.lam))
                )
        chosen, fallback = self._pick_feasible(root.children, budget)
        if cfg.warm_start:
            self._carry_lam = dual.lam
        self.last_info = {
            "lambda": dual.lam.tolist(),
            "queries": cfg.queries,
            "selected": chosen.option.label,
            "infeasible_root": fallback,
            "root": [
                {
                    "label": c.option.label,
                    "visits": c.visits,
                    "q": c.q,
                    "q_cost": c.q_cost.tolist(),
                    "feasible": bool(np.all(c.q_cost <= budget)),
                }
                for c in root.children
            ],
        }
        return chosen.option

    @staticmethod
    def _argmax_lagrangian(children: list[_OptionNode], lam: Array) -> _OptionNode:
        best = children[0]
        best_score = best.q - float(lam @ best.q_cost)
        for child in children[1:]:
            score = child.q - float(lam @ child.q_cost)
            if score > best_score:
                best, best_score = child, score
        return best

    @staticmethod
    def _pick_feasible(children: list[_OptionNode], budget: Array) -> tuple[_OptionNode, bool]:
        """Best Q subject to Q_C <= budget; else the least-violating child."""
        best: _OptionNode | None = None
        for child in children:
            if np.all(child.q_cost <= budget) and (best is None or child.q > best.q):
                best = child
        if best is not None:
            return best, False
        best = min(children, key=lambda c: float(np.max(c.q_cost - budget)))
        return best, True

    # -- recursion -----------------------------------------------------

    def simulate(
        self,
        node: _BeliefNode,
        budget: Array,
        depth: int,
        dual: DualState,
        rng: np.random.Generator,
    ) -> tuple[float, Array]:
        if depth <= 0 or node.belief.exhausted:
            return 0.0, self._zero
        cfg = self.cfg
        onode = self.option_prog_widen(node, budget, dual, rng)
        if len(onode.transitions) <= cfg.k_transitions * onode.visits**cfg.alpha_transitions:
            tr = self.option_rollout(node.belief, onode.option, depth, rng)
            child = _BeliefNode(tr.belief)
            onode.transitions.append(tr)
            onode.children.append(child)
            g = self.gamma**tr.tau
            v_next, c_next = self.estimate_value(
                tr.belief, (budget - tr.cost) / g, depth - tr.tau, rng
            )
        else:
            j = int(rng.integers(len(onode.transitions)))
            tr = onode.transitions[j]
            child = onode.children[j]
            if self._step_log is not None and tr.steps:
                self._step_log.extend(tr.steps)
            g = self.gamma**tr.tau
            v_next, c_next = self.simulate(child, (budget - tr.cost) / g, depth - tr.tau, dual, rng)
        v = tr.reward + g * v_next
        c = tr.cost + g * c_next
        node.visits += 1
        onode.visits += 1
        onode.q += (v - onode.q) / onode.visits
        onode.cost_sum += c
        onode.qc0 = onode.cost_sum[0] / onode.visits
        return v, c

    def option_prog_widen(
        self, node: _BeliefNode, budget: Array, dual: DualState, rng: np.random.Generator
    ) -> _OptionNode:
        cfg = self.cfg
        children = node.children
        if len(children) <= cfg.k_options * node.visits**cfg.alpha_options:
            if self._trivial_init and len(node.labels) == self._n_options:
                # pool exhausted and nothing can change: the redraw over all
                # available options would return an existing child, so only
                # the uniform draw itself is consumed
                rng.integers(self._n_options)
            else:
                if node.available is None:
                    node.available = self._available(node.belief)
                opt = sample_next_option(
                    self.options, node.belief, np.maximum(budget, 0.0), node.labels, rng,
                    available=node.available,
                )
                if opt.label not in node.labels:
                    children.append(_OptionNode(opt, self._cost_dim))
                    node.labels.add(opt.label)
        for child in children:  # an unvisited child scores +inf; first one wins
            if child.visits == 0:
                return child
        log_n = log(node.visits)
        kappa = cfg.exploration
        best = children[0]
        if dual.lam.any():
            if self._cost_dim == 1:
                lam0 = float(dual.lam[0])
                best_score = best.q - lam0 * best.qc0 + kappa * sqrt(log_n / best.visits)
                for child in children[1:]:
                    score = child.q - lam0 * child.qc0 + kappa * sqrt(log_n / child.visits)
                    if score > best_score:
                        best, best_score = child, score
            else:
                lam = dual.lam
                best_score = best.q - float(lam @ best.q_cost) + kappa * sqrt(log_n / best.visits)
                for child in children[1:]:
                    score = child.q - float(lam @ child.q_cost) + kappa * sqrt(log_n / child.visits)
                    if score > best_score:
                        best, best_score = child, score
        else:
            best_score = best.q + kappa * sqrt(log_n / best.visits)
            for child in children[1:]:
                score = child.q + kappa * sqrt(log_n / child.visits)
                if score > best_score:
                    best, best_score = child, score
        return best

    def _available(self, belief: ParticleBelief) -> list[OptionSpec]:
        if self._trivial_init:
            return self._option_list
        return available_options(self.options, belief)

    def option_rollout(
        self, belief: ParticleBelief, option: OptionSpec, depth: int, rng: np.random.Generator
    ) -> SemiMarkovTransition:
        """Imagine executing the option to termination or depth exhaustion.

        Accumulates gamma^t-discounted reward/cost within the option (the
        first step undiscounted) and returns the induced semi-Markov
        transition.  A belief running out of live particles truncates the
        rollout at the accumulated duration.
        """
        if depth < 1:
            raise ValueError("option_rollout needs depth >= 1")
        if option.begin is not None:
            option.begin()
        action = option.policy(belief)
        b, reward, cost = pf_generative_step(self.model, belief, action, rng, self.diagnostics)
        total_r = reward
        total_c = cost.copy()
        steps: list | None = None
        if self._step_log is not None:
            steps = [(reward, cost.copy())]
            self._step_log.append(steps[0])
        tau = 1
        while depth - tau > 0:
            if b.exhausted:
                break
            if option_terminates(option, b, rng):
                break
            action = option.policy(b)
            b, reward, cost = pf_generative_step(self.model, b, action, rng, self.diagnostics)
            disc = self.gamma**tau
            total_r += disc * reward
            total_c += disc * cost
            if steps is not None:
                steps.append((reward, cost.copy()))
                self._step_log.append(steps[-1])
            tau += 1
        return SemiMarkovTransition(b, total_r, total_c, tau, tuple(steps) if steps else None)

    def estimate_value(
        self, belief: ParticleBelief, budget: Array, depth: int, rng: np.random.Generator
    ) -> tuple[float, Array]:
        """Leaf value estimate: a rollout chaining uniformly random
        available options until the depth budget runs out."""
        v = 0.0
        c = np.zeros(self._cost_dim)
        if self.cfg.estimator == "zero":
            return v, c
        d = depth if self.cfg.rollout_depth is None else min(depth, self.cfg.rollout_depth)
        disc = 1.0
        b = belief
        while d >= 1 and not b.exhausted:
            avail = self._available(b)
            if not avail:
                break
            opt = avail[int(rng.integers(len(avail)))]
            tr = self.option_rollout(b, opt, d, rng)
            v += disc * tr.reward
            c += disc * tr.cost
            disc *= self.gamma**tr.tau
            d -= tr.tau
            b = tr.belief
        return v, c

    # -- test instrumentation -------------------------------------------

    def start_step_log(self) -> list:
        """Record raw per-step (reward, cost) pairs along simulate paths."""
        self._step_log = []
        self.record_steps = True
        return self._step_log

    def stop_step_log(self) -> None:
        self._step_log = None
        self.record_steps = False


def tree_size_ratio(a: float, o: float, c1: float, c2: float, horizon: float, tau: float) -> float:
    """Hierarchical-to-flat search tree size ratio.

    For a flat tree with action branching a and transition branching o,
    and a hierarchical tree whose branchings scale by c1 and c2 with
    options lasting tau steps on average, the ratio over a horizon is
    (c1*c2*a*o)**(horizon/tau) / (a*o)**horizon.
    """
    if min(a, o, c1, c2, horizon) <= 0 or tau < 1:
        raise ValueError("branching inputs must be positive and tau >= 1")
    return (c1 * c2 * a * o) ** (horizon / tau) / (a * o) ** horizon
