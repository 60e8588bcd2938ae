"""Box-constrained particle swarm optimizer.

Synchronous update: every iteration first draws all random coefficients in
particle order, then moves every particle with

    v <- w*v + c1*r1*(pbest - x) + c2*r2*(gbest - x)
    x <- x + v

clamps velocities to +/- clamp_fraction * box width and positions back into
the box, evaluates the objective everywhere, and finally refreshes the
personal and global bests.  Drawing the randomness up front keeps results
independent of how the objective evaluations are scheduled.

r1, r2 default to one scalar draw per particle per iteration; set
``per_dimension_draws`` for the common per-coordinate variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, OptimizerError


@dataclass
class SwarmConfig:
    n_particles: int = 200
    max_iter: int = 500
    inertia: float = 0.6
    cognitive: float = 2.0
    social: float = 2.0
    seed: int = 0
    clamp_fraction: float = 0.5
    tol: float = 1e-8
    patience: int = 20
    per_dimension_draws: bool = False

    def __post_init__(self):
        if self.n_particles < 1:
            raise InputError("need at least one particle")
        if self.max_iter < 1:
            raise InputError("need at least one iteration")
        if not 0.0 < self.inertia < 1.0:
            raise InputError("inertia must lie in (0, 1)")
        if self.cognitive <= 0.0 or self.social <= 0.0:
            raise InputError("acceleration coefficients must be positive")
        if self.patience < 1:
            raise InputError("patience must be at least 1")


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.ascontiguousarray(self.lower, dtype=np.float64)
        upper = np.ascontiguousarray(self.upper, dtype=np.float64)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise InputError("bounds must be matching 1-D arrays")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise InputError("bounds must be finite")
        if (lower > upper).any():
            raise InputError("lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, points: np.ndarray) -> bool:
        return bool((points >= self.lower).all() and (points <= self.upper).all())


@dataclass
class SwarmState:
    positions: np.ndarray      # (Np, m)
    velocities: np.ndarray     # (Np, m)
    pbest_pos: np.ndarray      # (Np, m)
    pbest_val: np.ndarray      # (Np,)
    gbest_pos: np.ndarray      # (m,)
    gbest_val: float
    iteration: int
    rng: np.random.Generator
    bounds: Bounds
    config: SwarmConfig
    seeded: bool = False       # initial positions evaluated yet?


@dataclass
class SwarmResult:
    x: np.ndarray
    fun: float
    iterations: int
    trace: np.ndarray          # gbest value after seeding and after each iteration
    converged: bool


def _as_batch(objective, vectorized: bool):
    if vectorized:
        return lambda xs: np.asarray(objective(xs), dtype=np.float64)
    return lambda xs: np.asarray([objective(x) for x in xs], dtype=np.float64)


def _check_finite(fvals: np.ndarray, iteration: int) -> None:
    bad = np.nonzero(~np.isfinite(fvals))[0]
    if bad.size:
        raise OptimizerError(
            f"objective returned {fvals[bad[0]]} for particle {bad[0]} "
            f"at iteration {iteration}"
        )


def initialize(bounds: Bounds, config: SwarmConfig, anchor=None) -> SwarmState:
    """Uniform positions in the box, zero velocities; particle 0 may be anchored."""
    rng = np.random.default_rng(config.seed)
    positions = rng.uniform(0.0, 1.0, (config.n_particles, bounds.dim))
    positions = bounds.lower + positions * (bounds.upper - bounds.lower)
    if anchor is not None:
        anchor = np.asarray(anchor, dtype=np.float64)
        if anchor.shape == (bounds.dim,) and bounds.contains(anchor):
            positions[0] = anchor
    return SwarmState(
        positions=positions,
        velocities=np.zeros_like(positions),
        pbest_pos=positions.copy(),
        pbest_val=np.full(config.n_particles, np.inf),
        gbest_pos=positions[0].copy(),
        gbest_val=np.inf,
        iteration=0,
        rng=rng,
        bounds=bounds,
        config=config,
    )


def _seed_bests(state: SwarmState, batch) -> None:
    fvals = batch(state.positions)
    _check_finite(fvals, state.iteration)
    state.pbest_val = fvals
    state.pbest_pos = state.positions.copy()
    best = int(np.argmin(fvals))
    state.gbest_val = float(fvals[best])
    state.gbest_pos = state.positions[best].copy()
    state.seeded = True


def step(state: SwarmState, objective, vectorized: bool = False) -> SwarmState:
    """One synchronous swarm update (in place; the state is also returned)."""
    from . import kernels  # deferred: kernels has no pso dependency

    batch = _as_batch(objective, vectorized)
    if not state.seeded:
        _seed_bests(state, batch)

    cfg, bounds = state.config, state.bounds
    n, m = state.positions.shape
    rdim = m if cfg.per_dimension_draws else 1
    r1 = state.rng.random((n, rdim))
    r2 = state.rng.random((n, rdim))
    vmax = cfg.clamp_fraction * (bounds.upper - bounds.lower)
    kernels.swarm_move(state.positions, state.velocities, state.pbest_pos,
                       state.gbest_pos, r1, r2, cfg.inertia, cfg.cognitive,
                       cfg.social, vmax, bounds.lower, bounds.upper)

    state.iteration += 1
    fvals = batch(state.positions)
    _check_finite(fvals, state.iteration)
    improved = fvals < state.pbest_val
    state.pbest_val = np.where(improved, fvals, state.pbest_val)
    state.pbest_pos[improved] = state.positions[improved]
    best = int(np.argmin(state.pbest_val))
    if state.pbest_val[best] < state.gbest_val:
        state.gbest_val = float(state.pbest_val[best])
        state.gbest_pos = state.pbest_pos[best].copy()
    return state


def optimize(objective, bounds: Bounds, config: SwarmConfig,
             anchor=None, vectorized: bool = False) -> SwarmResult:
    """Minimize the objective over the box.

    Stops when the global best improves by less than ``config.tol`` for
    ``config.patience`` consecutive iterations, or at ``config.max_iter``.
    The trace holds the global-best value after seeding and after every
    iteration, and is nonincreasing.
    """
    state = initialize(bounds, config, anchor)
    batch = _as_batch(objective, vectorized)
    _seed_bests(state, batch)
    trace = [state.gbest_val]
    stall = 0
    converged = False
    while state.iteration < config.max_iter:
        previous = state.gbest_val
        step(state, objective, vectorized)
        trace.append(state.gbest_val)
        stall = stall + 1 if previous - state.gbest_val < config.tol else 0
        if stall >= config.patience:
            converged = True
            break
    return SwarmResult(
        x=state.gbest_pos.copy(),
        fun=state.gbest_val,
        iterations=state.iteration,
        trace=np.asarray(trace),
        converged=converged,
    )
