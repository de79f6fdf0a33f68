"""Flat Lagrangian belief-tree search over primitive actions.

Reference baseline: the same dual-ascent search as the option planner but
with one-step primitive actions, double progressive widening (actions and
belief transitions) and random-action rollouts.  Kept as an independent
implementation so the option planner restricted to one-step options can
be checked against it trace-for-trace.
"""
from __future__ import annotations

from math import log, sqrt

import numpy as np

from .belief import FilterDiagnostics, ParticleBelief, pf_generative_step
from .model import Array, ConstrainedPOMDP
from .planner import DualState, PlannerConfig, dual_update


class _ActionNode:
    __slots__ = ("action", "visits", "q", "qc0", "cost_sum", "transitions", "children")

    def __init__(self, action, cost_dim: int):
        self.action = action
        self.visits = 0
        self.q = 0.0
        self.qc0 = 0.0
        self.cost_sum = np.zeros(cost_dim)
        self.transitions: list[tuple[ParticleBelief, float, Array]] = []
        self.children: list["_FlatNode"] = []

    @property
    def q_cost(self) -> Array:
        if self.visits == 0:
            return self.cost_sum
        return self.cost_sum / self.visits


class _FlatNode:
    __slots__ = ("belief", "visits", "children", "tried")

    def __init__(self, belief: ParticleBelief):
        self.belief = belief
        self.visits = 0
        self.children: list[_ActionNode] = []
        self.tried: set = set()


class FlatPlanner:
    """Per-decision flat search; same hyperparameters as the option planner."""

    def __init__(self, model: ConstrainedPOMDP, config: PlannerConfig):
        self.model = model
        self.cfg = config
        self.gamma = model.discount if config.gamma is None else config.gamma
        scale = model.reward_scale if config.dual_step_scale is None else config.dual_step_scale
        self._dual_step0 = config.dual_step * scale
        self._cost_dim = model.cost_dim
        self._actions = tuple(model.actions())
        self._carry_lam: Array | None = None
        self.last_tree: _FlatNode | None = None
        self.last_info: dict | None = None
        self.trace: list | None = None
        self.diagnostics = FilterDiagnostics()

    def select_action(self, belief: ParticleBelief, budget: Array, rng: np.random.Generator):
        cfg = self.cfg
        budget = np.asarray(budget, dtype=np.float64)
        root = _FlatNode(belief)
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
                self.trace.append((float(v), tuple(c), f"a={greedy.action}", tuple(dual.lam)))
        chosen, infeasible = self._pick_feasible(root.children, budget)
        if cfg.warm_start:
            self._carry_lam = dual.lam
        self.last_info = {
            "lambda": dual.lam.tolist(),
            "queries": cfg.queries,
            "selected": f"a={chosen.action}",
            "infeasible_root": infeasible,
            "root": [
                {
                    "label": f"a={c.action}",
                    "visits": c.visits,
                    "q": c.q,
                    "q_cost": c.q_cost.tolist(),
                    "feasible": bool(np.all(c.q_cost <= budget)),
                }
                for c in root.children
            ],
        }
        return chosen.action

    @staticmethod
    def _argmax_lagrangian(children: list[_ActionNode], lam: Array) -> _ActionNode:
        best = children[0]
        best_score = best.q - float(lam @ best.q_cost)
        for child in children[1:]:
            score = child.q - float(lam @ child.q_cost)
            if score > best_score:
                best, best_score = child, score
        return best

    @staticmethod
    def _pick_feasible(children: list[_ActionNode], budget: Array) -> tuple[_ActionNode, bool]:
        best: _ActionNode | None = None
        for child in children:
            if np.all(child.q_cost <= budget) and (best is None or child.q > best.q):
                best = child
        if best is not None:
            return best, False
        return min(children, key=lambda c: float(np.max(c.q_cost - budget))), True

    def simulate(
        self,
        node: _FlatNode,
        budget: Array,
        depth: int,
        dual: DualState,
        rng: np.random.Generator,
    ) -> tuple[float, Array]:
        if depth <= 0 or node.belief.exhausted:
            return 0.0, np.zeros(self._cost_dim)
        cfg = self.cfg
        anode = self.action_prog_widen(node, dual, rng)
        if len(anode.transitions) <= cfg.k_transitions * anode.visits**cfg.alpha_transitions:
            b, reward, cost = pf_generative_step(
                self.model, node.belief, anode.action, rng, self.diagnostics
            )
            child = _FlatNode(b)
            anode.transitions.append((b, reward, cost))
            anode.children.append(child)
            v_next, c_next = self.rollout(b, depth - 1, rng)
        else:
            j = int(rng.integers(len(anode.transitions)))
            b, reward, cost = anode.transitions[j]
            child = anode.children[j]
            v_next, c_next = self.simulate(
                child, (budget - cost) / self.gamma, depth - 1, dual, rng
            )
        v = reward + self.gamma * v_next
        c = cost + self.gamma * c_next
        node.visits += 1
        anode.visits += 1
        anode.q += (v - anode.q) / anode.visits
        anode.cost_sum += c
        anode.qc0 = anode.cost_sum[0] / anode.visits
        return v, c

    def action_prog_widen(
        self, node: _FlatNode, dual: DualState, rng: np.random.Generator
    ) -> _ActionNode:
        cfg = self.cfg
        if len(node.children) <= cfg.k_options * node.visits**cfg.alpha_options:
            actions = self._actions
            if len(node.tried) == len(actions):
                rng.integers(len(actions))  # exhausted redraw, no tree change
            else:
                fresh = [a for a in actions if a not in node.tried]
                pool = fresh if fresh else list(actions)
                action = pool[int(rng.integers(len(pool)))]
                if action not in node.tried:
                    node.children.append(_ActionNode(action, self._cost_dim))
                    node.tried.add(action)
        for child in node.children:
            if child.visits == 0:
                return child
        log_n = log(node.visits)
        kappa = cfg.exploration
        best = node.children[0]
        if dual.lam.any():
            if self._cost_dim == 1:
                lam0 = float(dual.lam[0])
                best_score = best.q - lam0 * best.qc0 + kappa * sqrt(log_n / best.visits)
                for child in node.children[1:]:
                    score = child.q - lam0 * child.qc0 + kappa * sqrt(log_n / child.visits)
                    if score > best_score:
                        best, best_score = child, score
            else:
                lam = dual.lam
                best_score = best.q - float(lam @ best.q_cost) + kappa * sqrt(log_n / best.visits)
                for child in node.children[1:]:
                    score = child.q - float(lam @ child.q_cost) + kappa * sqrt(log_n / child.visits)
                    if score > best_score:
                        best, best_score = child, score
        else:
            best_score = best.q + kappa * sqrt(log_n / best.visits)
            for child in node.children[1:]:
                score = child.q + kappa * sqrt(log_n / child.visits)
                if score > best_score:
                    best, best_score = child, score
        return best

    def rollout(
        self, belief: ParticleBelief, depth: int, rng: np.random.Generator
    ) -> tuple[float, Array]:
        v = 0.0
        c = np.zeros(self._cost_dim)
        if self.cfg.estimator == "zero":
            return v, c
        d = depth if self.cfg.rollout_depth is None else min(depth, self.cfg.rollout_depth)
        disc = 1.0
        b = belief
        actions = self.model.actions()
        while d >= 1 and not b.exhausted:
            action = actions[int(rng.integers(len(actions)))]
            b, reward, cost = pf_generative_step(self.model, b, action, rng, self.diagnostics)
            v += disc * reward
            c += disc * cost
            disc *= self.gamma
            d -= 1
        return v, c
