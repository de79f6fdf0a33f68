"""Particle-filter beliefs and the generative belief-state step.

A belief is an immutable bag of m particles with normalized weights
(uniform after every resample).  Two update paths exist:

* ``pf_generative_step`` — the in-tree transition: steps every particle,
  draws a reference observation from one particle chosen proportionally
  to weight, reweights everything against it and resamples.  Returns the
  new belief together with the weighted mean reward and cost of the step,
  which estimate the belief-state reward/cost of the action.
* ``update_belief`` — the execution-time bootstrap update conditioned on
  the observation actually received from the environment.

Both resample systematically (single uniform draw, lowest variance among
the simple schemes) and both fall back to an unweighted resample with
domain-specific jitter when the total observation likelihood underflows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .model import Array, ConstrainedPOMDP

DEPLETION_EPS = 1e-12


class BeliefExhausted(RuntimeError):
    """Raised when every particle of a belief is terminal."""


@dataclass
class FilterDiagnostics:
    """Mutable counters for particle-filter degeneracy events."""

    depletion_events: int = 0


_UNIFORM: dict[int, Array] = {}


def uniform_weights(m: int) -> Array:
    """Shared read-only uniform weight vector (the post-resample weights)."""
    w = _UNIFORM.get(m)
    if w is None:
        w = np.full(m, 1.0 / m)
        w.setflags(write=False)
        _UNIFORM[m] = w
    return w


@dataclass(frozen=True)
class ParticleBelief:
    """m particles plus weights; arrays are owned and must not be mutated."""

    particles: Any
    weights: Array
    terminal_mass: float = 0.0

    def __post_init__(self) -> None:
        w = self.weights
        if w is _UNIFORM.get(w.shape[0] if w.ndim == 1 else -1):
            return  # the shared uniform vector is valid by construction
        if w.ndim != 1 or w.shape[0] < 1:
            raise ValueError("weights must be a nonempty 1-d array")
        if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")

    @property
    def num_particles(self) -> int:
        return int(self.weights.shape[0])

    @property
    def exhausted(self) -> bool:
        return self.terminal_mass >= 1.0


def _terminal_mass(model: ConstrainedPOMDP, particles) -> float:
    mask = model.terminal_mask(particles)
    return float(np.count_nonzero(mask)) / mask.shape[0]


def initial_belief(model: ConstrainedPOMDP, m: int, rng: np.random.Generator) -> ParticleBelief:
    """Particle representation of the model's initial state distribution."""
    particles = model.sample_states(m, rng)
    return ParticleBelief(particles, uniform_weights(m), _terminal_mass(model, particles))


_ARANGE: dict[int, Array] = {}


def systematic_resample(weights: Array, rng: np.random.Generator) -> Array:
    """Indices of a systematic resample; deterministic given one uniform."""
    m = weights.shape[0]
    grid = _ARANGE.get(m)
    if grid is None:
        grid = np.arange(m)
        grid.setflags(write=False)
        _ARANGE[m] = grid
    positions = (rng.random() + grid) / m
    cum = np.cumsum(weights)
    cum[-1] = 1.0  # guard against float drift in the final bin
    return np.minimum(np.searchsorted(cum, positions), m - 1)


def _weighted_index(weights: Array, rng: np.random.Generator) -> int:
    m = weights.shape[0]
    if weights is _UNIFORM.get(m):
        return int(rng.random() * m)
    cum = np.cumsum(weights)
    return int(min(np.searchsorted(cum, rng.random() * cum[-1]), m - 1))


def _reweight_resample(
    model: ConstrainedPOMDP,
    propagated,
    prior_weights: Array,
    observation: Any,
    rng: np.random.Generator,
    diagnostics: FilterDiagnostics | None,
) -> ParticleBelief:
    m = prior_weights.shape[0]
    like = model.obs_density(propagated, observation)
    w = prior_weights * like
    total = float(w.sum())
    if total < DEPLETION_EPS:
        # depletion rescue: keep the propagated cloud, jitter, flag it
        if diagnostics is not None:
            diagnostics.depletion_events += 1
        particles = model.jitter_states(propagated, rng)
    else:
        idx = systematic_resample(w / total, rng)
        particles = propagated[idx]
    return ParticleBelief(particles, uniform_weights(m), _terminal_mass(model, particles))


def pf_generative_step(
    model: ConstrainedPOMDP,
    belief: ParticleBelief,
    action: Any,
    rng: np.random.Generator,
    diagnostics: FilterDiagnostics | None = None,
) -> tuple[ParticleBelief, float, Array]:
    """One belief-state generative step: (b, a) -> (b', mean r, mean c).

    The returned reward/cost are convex combinations of per-particle
    values under the input weights.  The successor belief conditions all
    particles on a single reference observation generated from one
    particle sampled proportionally to weight, which keeps the belief
    transition stochastic.

    Domains may expose a fused ``pf_step`` kernel for the uniform-weight
    case (the only case this planner produces, since every update
    resamples); it must consume the generator in the same order
    (propagate, reference pick, observation, resample).
    """
    if belief.exhausted:
        raise BeliefExhausted("all particles terminal")
    w = belief.weights
    fused = getattr(model, "pf_step", None)
    if fused is not None and w is _UNIFORM.get(w.shape[0]):
        particles, mean_r, mean_c, tm, depleted = fused(belief.particles, action, rng)
        if depleted and diagnostics is not None:
            diagnostics.depletion_events += 1
        return ParticleBelief(particles, w, tm), mean_r, mean_c
    propagated, rewards, costs = model.propagate(belief.particles, action, rng)
    mean_r = float(w @ rewards)
    mean_c = w @ costs
    ref = _weighted_index(w, rng)
    obs = model.sample_obs(
        model.unpack_state(belief.particles, ref), action, model.unpack_state(propagated, ref), rng
    )
    new_belief = _reweight_resample(model, propagated, w, obs, rng, diagnostics)
    return new_belief, mean_r, mean_c


def update_belief(
    model: ConstrainedPOMDP,
    belief: ParticleBelief,
    action: Any,
    observation: Any,
    rng: np.random.Generator,
    diagnostics: FilterDiagnostics | None = None,
) -> ParticleBelief:
    """Bootstrap update on a real observation: propagate, weight, resample."""
    if belief.exhausted:
        raise BeliefExhausted("all particles terminal")
    propagated, _, _ = model.propagate(belief.particles, action, rng)
    return _reweight_resample(model, propagated, belief.weights, observation, rng, diagnostics)


def belief_stats(
    belief: ParticleBelief, features: Callable[[Any], Array] | None = None
) -> tuple[Array, Array]:
    """Weighted mean and weighted (population) std per state component.

    ``features`` maps the particle batch to an (m, d) array; by default the
    particles themselves are interpreted as numbers.
    """
    if features is not None:
        x = np.asarray(features(belief.particles), dtype=np.float64)
    else:
        x = np.asarray(belief.particles, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    w = belief.weights
    mean = w @ x
    var = w @ (x - mean) ** 2
    return mean, np.sqrt(var)
