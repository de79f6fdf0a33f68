"""Core constrained-POMDP abstractions: cost vectors, budgets, discounting.

Costs are nonnegative float vectors of a fixed per-problem dimension k;
budgets are float vectors of the same dimension (they may go negative
inside the search, where the sign carries "already infeasible"
information).  All sampling goes through explicit ``numpy.random.Generator``
handles; model objects hold no RNG state and are safe to share across
episodes.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

Array = np.ndarray


def as_cost(values: Any, dim: int | None = None) -> Array:
    """Validate and return an instantaneous cost vector (elementwise >= 0)."""
    c = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if c.ndim != 1:
        raise ValueError(f"cost must be a 1-d vector, got shape {c.shape}")
    if dim is not None and c.shape[0] != dim:
        raise ValueError(f"cost dimension {c.shape[0]} != expected {dim}")
    if np.any(c < 0.0):
        raise ValueError(f"instantaneous costs must be nonnegative, got {c}")
    return c


def as_budget(values: Any) -> Array:
    b = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if b.ndim != 1:
        raise ValueError(f"budget must be a 1-d vector, got shape {b.shape}")
    return b


def clamp_positive(values: Any) -> Array:
    """Elementwise positive part, max(x, 0)."""
    return np.maximum(np.asarray(values, dtype=np.float64), 0.0)


def propagate_budget(
    budget: Array, cost: Array, gamma: float, tau: int, *, clamp: bool
) -> Array:
    """Remaining budget after paying ``cost`` over ``tau`` underlying steps.

    Returns (budget - cost) / gamma**tau.  With ``clamp=True`` the positive
    part is taken (the executor's budget recursion); with ``clamp=False``
    the raw value is returned (the in-tree recursion, where negative
    entries keep signalling infeasibility to deeper selections).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    out = (np.asarray(budget, dtype=np.float64) - cost) / gamma**tau
    return np.maximum(out, 0.0) if clamp else out


def discounted_return(
    steps: Iterable[tuple[float, Any]], gamma: float, cost_dim: int = 1
) -> tuple[float, Array]:
    """Discounted (reward, cost) sums over a finite (r_t, c_t) trajectory.

    An empty trajectory yields (0.0, zero vector of ``cost_dim``).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    total_r = 0.0
    total_c: Array | None = None
    disc = 1.0
    for reward, cost in steps:
        c = np.atleast_1d(np.asarray(cost, dtype=np.float64))
        if total_c is None:
            total_c = np.zeros(c.shape[0], dtype=np.float64)
        total_r += disc * float(reward)
        total_c += disc * c
        disc *= gamma
    if total_c is None:
        total_c = np.zeros(cost_dim, dtype=np.float64)
    return total_r, total_c


@dataclass(frozen=True)
class GenerativeStep:
    """One generative-model draw for a single (state, action) pair."""

    state: Any
    observation: Any
    reward: float
    cost: Array


class ConstrainedPOMDP(abc.ABC):
    """Sampling-only constrained POMDP over vectorized particle states.

    Concrete domains own the representation of a batch of states (an array
    whose leading axis indexes particles) and must implement the batch
    hooks below.  No explicit transition/observation tables are required;
    belief updates are bootstrap particle filters, so the only density a
    domain must expose is the observation likelihood.
    """

    discount: float
    budget: Array
    reward_scale: float = 1.0

    @property
    def cost_dim(self) -> int:
        return int(self.budget.shape[0])

    @abc.abstractmethod
    def actions(self) -> Sequence[Any]:
        """Finite action enumeration, in a fixed canonical order."""

    @abc.abstractmethod
    def sample_states(self, n: int, rng: np.random.Generator):
        """Draw n states from the initial distribution."""

    @abc.abstractmethod
    def propagate(self, states, action: Any, rng: np.random.Generator):
        """Step every state once; returns (next_states, rewards, costs).

        rewards has shape (n,), costs shape (n, k).  Terminal states must
        be absorbing with zero reward and zero cost.
        """

    @abc.abstractmethod
    def sample_obs(self, state, action: Any, next_state, rng: np.random.Generator):
        """Sample one observation for a single underlying transition."""

    @abc.abstractmethod
    def obs_density(self, next_states, observation: Any) -> Array:
        """Likelihood of one fixed observation under each next state."""

    @abc.abstractmethod
    def terminal_mask(self, states) -> Array:
        """Boolean mask of terminal states."""

    @abc.abstractmethod
    def cost_mean(self, states, action: Any) -> Array:
        """Exact expected instantaneous cost per state, shape (n, k)."""

    def features(self, states) -> Array:
        """Numeric per-state features, shape (n, d). Default: identity."""
        arr = np.asarray(states, dtype=np.float64)
        return arr.reshape(arr.shape[0], -1)

    def jitter_states(self, states, rng: np.random.Generator):
        """Perturbation applied on particle depletion. Default: none."""
        return states

    # single-state conveniences built on the batch hooks

    def step(self, state, action: Any, rng: np.random.Generator) -> GenerativeStep:
        batch = self.pack_states([state])
        nxt, rewards, costs = self.propagate(batch, action, rng)
        obs = self.sample_obs(state, action, self.unpack_state(nxt, 0), rng)
        return GenerativeStep(self.unpack_state(nxt, 0), obs, float(rewards[0]), costs[0])

    def is_terminal(self, state) -> bool:
        return bool(self.terminal_mask(self.pack_states([state]))[0])

    def pack_states(self, states: Sequence[Any]):
        """Assemble a batch array from single states."""
        return np.asarray(states)

    def unpack_state(self, states, index: int):
        return states[index]
