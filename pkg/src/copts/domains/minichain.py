"""Small fully enumerable constrained chain for oracle testing.

Six states on a line; state 5 is absorbing.  Both actions advance the
robot with the same kernel, but "risky" collects a small per-step reward
bonus and incurs one unit of cost when taken in the guarded start state
0.  Binary observations leak the position.  Everything (transition,
observation, reward, cost tables and the initial distribution) is
exposed in closed form so exact filtering, exact policy evaluation and
exhaustive constrained expectimax stay feasible by brute force.
"""
from __future__ import annotations

import numpy as np

from ..model import Array, ConstrainedPOMDP, as_budget

N_STATES = 6
TERMINAL = 5
GUARD = (0,)

_ZERO_COSTS: dict[int, np.ndarray] = {}
_GRIDS: dict[int, np.ndarray] = {}


def _zero_costs(n: int) -> np.ndarray:
    """Shared read-only (n, 1) zero cost block for the costless action."""
    z = _ZERO_COSTS.get(n)
    if z is None:
        z = np.zeros((n, 1))
        z.setflags(write=False)
        _ZERO_COSTS[n] = z
    return z


def _grid(m: int) -> np.ndarray:
    g = _GRIDS.get(m)
    if g is None:
        g = np.arange(m)
        g.setflags(write=False)
        _GRIDS[m] = g
    return g


def _mass(states: np.ndarray) -> float:
    return float(np.count_nonzero(states == TERMINAL)) / states.shape[0]


class MiniChain(ConstrainedPOMDP):
    def __init__(
        self,
        gamma: float = 0.9,
        budget: float = 0.1,
        horizon: int = 6,
        advance: float = 0.97,
        risky_bonus: float = 0.2,
        goal_bonus: float = 10.0,
        step_reward: float = -1.0,
        guard_cost: float = 1.0,
    ):
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        self.discount = gamma
        self.budget = as_budget([budget])
        self.horizon = horizon
        self.advance = advance
        self.risky_bonus = risky_bonus
        self.goal_bonus = goal_bonus
        self.step_reward = step_reward
        self.guard_cost = guard_cost
        self.reward_scale = abs(goal_bonus)
        # P(o=1 | s'), increasing along the chain
        self.p_high = np.array([0.15, 0.3, 0.5, 0.7, 0.85, 0.95])
        self.init_dist = np.array([0.9, 0.1, 0.0, 0.0, 0.0, 0.0])

    def actions(self):
        return ("risky", "safe")

    def sample_states(self, n: int, rng: np.random.Generator) -> Array:
        return rng.choice(N_STATES, size=n, p=self.init_dist)

    def propagate(self, states: Array, action, rng: np.random.Generator):
        if action not in ("risky", "safe"):
            raise ValueError(f"invalid action {action!r}")
        s = np.asarray(states)
        u = rng.random(s.shape[0])
        step_r = self.step_reward + (self.risky_bonus if action == "risky" else 0.0)
        live = s < TERMINAL
        if live.all():
            nxt = np.where(u < self.advance, s + 1, s)
            rewards = step_r + self.goal_bonus * (nxt == TERMINAL)
            if action == "risky":
                costs = np.where(s <= GUARD[-1], self.guard_cost, 0.0)[:, None]
            else:
                costs = _zero_costs(s.shape[0])
            return nxt, rewards, costs
        nxt = np.where(live & (u < self.advance), s + 1, s)
        arrive = live & (nxt == TERMINAL)
        rewards = np.where(live, step_r + self.goal_bonus * arrive, 0.0)
        if action == "risky":
            costs = np.where(live & (s <= GUARD[-1]), self.guard_cost, 0.0)[:, None]
        else:
            costs = _zero_costs(s.shape[0])
        return nxt, rewards, costs

    def pf_step(self, particles: Array, action, rng: np.random.Generator):
        """Fused uniform-weight belief transition (same draw order as the
        generic path: propagate, reference pick, observation, resample)."""
        s = particles
        m = s.shape[0]
        u = rng.random(m)
        live = s < TERMINAL
        all_live = live.all()
        if all_live:
            nxt = np.where(u < self.advance, s + 1, s)
            arrived = float(np.count_nonzero(nxt == TERMINAL)) / m
            live_frac = 1.0
        else:
            nxt = np.where(live & (u < self.advance), s + 1, s)
            arrived = float(np.count_nonzero(live & (nxt == TERMINAL))) / m
            live_frac = float(np.count_nonzero(live)) / m
        if action == "risky":
            mean_r = (self.step_reward + self.risky_bonus) * live_frac + self.goal_bonus * arrived
            guard = live & (s <= GUARD[-1]) if not all_live else s <= GUARD[-1]
            mean_c = np.array([self.guard_cost * float(np.count_nonzero(guard)) / m])
        else:
            mean_r = self.step_reward * live_frac + self.goal_bonus * arrived
            mean_c = np.zeros(1)
        ref = int(rng.random() * m)
        obs_high = rng.random() < self.p_high[nxt[ref]]
        like = self.p_high[nxt] if obs_high else 1.0 - self.p_high[nxt]
        total = float(like.sum())
        if total < m * 1e-12:
            return nxt, mean_r, mean_c, _mass(nxt), True
        grid = _grid(m)
        positions = (rng.random() + grid) * (total / m)
        cum = np.cumsum(like)
        idx = np.minimum(np.searchsorted(cum, positions), m - 1)
        new = nxt[idx]
        return new, mean_r, mean_c, _mass(new), False

    def sample_obs(self, state, action, next_state, rng: np.random.Generator) -> int:
        return int(rng.random() < self.p_high[int(next_state)])

    def obs_density(self, next_states: Array, observation) -> Array:
        p = self.p_high[np.asarray(next_states)]
        return p if observation == 1 else 1.0 - p

    def terminal_mask(self, states: Array) -> Array:
        return np.asarray(states) == TERMINAL

    def cost_mean(self, states: Array, action) -> Array:
        s = np.asarray(states)
        out = np.zeros((s.shape[0], 1))
        if action == "risky":
            out[:, 0] = np.where((s < TERMINAL) & (s <= GUARD[-1]), self.guard_cost, 0.0)
        return out

    def features(self, states: Array) -> Array:
        return np.asarray(states, dtype=np.float64).reshape(-1, 1)

    def pack_states(self, states):
        return np.asarray(states, dtype=np.int64)

    # ---- closed-form tables for the exact oracles ----

    def transition_matrix(self, action) -> Array:
        """T[s, s'] = P(s' | s, a), with state 5 absorbing."""
        t = np.zeros((N_STATES, N_STATES))
        for s in range(N_STATES):
            if s == TERMINAL:
                t[s, s] = 1.0
                continue
            t[s, min(s + 1, TERMINAL)] += self.advance
            t[s, s] += 1.0 - self.advance
        return t

    def obs_matrix(self) -> Array:
        """Z[s', o] = P(o | s')."""
        z = np.zeros((N_STATES, 2))
        z[:, 1] = self.p_high
        z[:, 0] = 1.0 - self.p_high
        return z

    def reward_vector(self, action) -> Array:
        """E[r | s, a] per state."""
        t = self.transition_matrix(action)
        bonus = self.risky_bonus if action == "risky" else 0.0
        r = np.zeros(N_STATES)
        for s in range(TERMINAL):
            arrive = t[s, TERMINAL]
            r[s] = self.step_reward + bonus + self.goal_bonus * arrive
        return r

    def cost_vector(self, action) -> Array:
        c = np.zeros(N_STATES)
        if action == "risky":
            for s in GUARD:
                c[s] = self.guard_cost
        return c


def exact_filter_update(model: MiniChain, belief: Array, action, observation) -> Array:
    """Exact Bayes posterior over the six states."""
    pred = belief @ model.transition_matrix(action)
    post = pred * model.obs_matrix()[:, observation]
    total = post.sum()
    if total <= 0.0:
        raise ValueError("observation has zero probability under the belief")
    return post / total


def obs_probabilities(model: MiniChain, belief: Array, action) -> Array:
    """P(o | b, a) for o in {0, 1}."""
    pred = belief @ model.transition_matrix(action)
    return pred @ model.obs_matrix()


def _pareto(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Nondominated (value, cost) pairs: max value, min cost.

    Costs within 1e-9 collapse to one level, which keeps the fronts small
    without moving any value by more than the dedup width.
    """
    points.sort(key=lambda p: (p[1], -p[0]))
    front: list[tuple[float, float]] = []
    best = -np.inf
    for v, c in points:
        if v <= best + 1e-12:
            continue
        if front and c - front[-1][1] < 1e-9:
            front[-1] = (v, c)
        else:
            front.append((v, c))
        best = v
    return front


def exact_solve(
    model: MiniChain, budget: Array | float | None = None, horizon: int | None = None
) -> tuple[float, str]:
    """Constrained-optimal value and root action by exhaustive expectimax.

    Enumerates every deterministic conditional plan over the belief tree
    to the horizon, pruning dominated (value, cost) pairs bottom-up, then
    picks the best root plan whose expected discounted cost fits the
    budget.  If no plan is feasible, the minimum-cost plan is returned.
    """
    gamma = model.discount
    if budget is None:
        budget = model.budget
    cap = float(np.atleast_1d(np.asarray(budget, dtype=float))[0])
    depth = model.horizon if horizon is None else horizon
    trans = {a: model.transition_matrix(a) for a in model.actions()}
    obs = model.obs_matrix()
    rvec = {a: model.reward_vector(a) for a in model.actions()}
    cvec = {a: model.cost_vector(a) for a in model.actions()}

    def action_front(belief: Array, d: int, action) -> list[tuple[float, float]]:
        r = float(belief @ rvec[action])
        c = float(belief @ cvec[action])
        combined = [(r, c)]
        pred = belief @ trans[action]
        for o in (0, 1):
            w = pred * obs[:, o]
            po = float(w.sum())
            if po < 1e-13:
                continue
            child = front(w / po, d - 1)
            combined = [
                (v0 + gamma * po * v1, c0 + gamma * po * c1)
                for v0, c0 in combined
                for v1, c1 in child
            ]
            combined = _pareto(combined)
        return combined

    def front(belief: Array, d: int) -> list[tuple[float, float]]:
        if d <= 0 or belief[TERMINAL] > 1.0 - 1e-12:
            return [(0.0, 0.0)]
        points: list[tuple[float, float]] = []
        for a in model.actions():
            points.extend(action_front(belief, d, a))
        return _pareto(points)

    b0 = model.init_dist.copy()
    best: tuple[float, float, str] | None = None
    fallback: tuple[float, float, str] | None = None
    for a in model.actions():
        for v, c in action_front(b0, depth, a):
            if c <= cap + 1e-9 and (best is None or v > best[0] + 1e-12):
                best = (v, c, a)
            if fallback is None or (c, -v) < (fallback[1], -fallback[0]):
                fallback = (v, c, a)
    chosen = best if best is not None else fallback
    assert chosen is not None
    return chosen[0], chosen[2]
