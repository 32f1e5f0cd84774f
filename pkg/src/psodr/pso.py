"""Two-layer particle swarm search over channel/bin masks.

Each particle is a continuous array of shape (n, k + 1): column 0 holds the
electrode slot of each mask row (range [0, N)), columns 1..k its frequency
bin slots (range [0, K)). Masks are decoded by flooring and deduplicating.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwarmConfig:
    n: int = 10
    k: int = 30
    N: int = 118
    K: int = 250
    pop_size: int = 30
    max_iter: int = 100
    c1: float = 0.5
    c2: float = 2.5
    w1: float = 0.2
    w2: float = 1.0
    v_max: float | None = None  # None: a quarter of each component's range
    seed: int = 0
    target_fitness: float = 1.0

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError("pop_size must be >= 2")
        if not 0 < self.n <= self.N:
            raise ValueError(f"need 0 < n <= N, got n={self.n}, N={self.N}")
        if not 0 < self.k <= self.K:
            raise ValueError(f"need 0 < k <= K, got k={self.k}, K={self.K}")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("acceleration coefficients must be nonnegative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")

    @property
    def upper(self):
        """Exclusive upper bound of every position component, shape (n, k + 1)."""
        hi = np.full((self.n, self.k + 1), float(self.K))
        hi[:, 0] = self.N
        return hi

    @property
    def v_limit(self):
        if self.v_max is None:
            return 0.25 * self.upper
        return np.full((self.n, self.k + 1), float(self.v_max))


@dataclass
class ParticleState:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_fitness: float = -np.inf
    current_fitness: float = -np.inf


@dataclass
class SwarmState:
    particles: list
    gbest_position: np.ndarray
    gbest_fitness: float = -np.inf
    iteration: int = 0
    rng: np.random.Generator = field(default=None, repr=False)


def ldiw(w1, w2, t, max_iter):
    """Inertia weight at iteration ``t``: w1 at t=0, moving linearly to w2 at t=max_iter."""
    if max_iter == 0:
        raise ValueError("max_iter must be positive")
    if not 0 <= t <= max_iter:
        raise ValueError(f"t={t} outside [0, {max_iter}]")
    # same line as (w1 - w2)(max_iter - t)/max_iter + w2, written so both endpoints are exact
    a = (max_iter - t) / max_iter
    return w1 * a + w2 * (1 - a)


def update_velocity(p, gbest_position, w, c1, c2, rng, v_max=None):
    r1 = rng.random(p.position.shape)
    r2 = rng.random(p.position.shape)
    v = (w * p.velocity
         + c1 * r1 * (p.pbest_position - p.position)
         + c2 * r2 * (gbest_position - p.position))
    if v_max is not None:
        v = np.clip(v, -v_max, v_max)
    return v


def reflect(x, upper):
    """Mirror ``x`` into [0, upper); returns (position, flip) where flip marks odd reflection counts."""
    x = np.asarray(x, dtype=np.float64)
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), x.shape)
    flip = (np.floor(x / upper) % 2) == 1
    y = np.mod(x, 2 * upper)
    y = np.where(y >= upper, 2 * upper - y, y)
    # upper itself is excluded from the range
    y = np.where(y >= upper, np.nextafter(upper, 0), y)
    return y, flip


def update_position(p, upper):
    """x + v reflected into range; reflected components have their velocity negated.

    Returns (position, velocity).
    """
    x, flip = reflect(p.position + p.velocity, upper)
    return x, np.where(flip, -p.velocity, p.velocity)


def _dedup(idx, size):
    # replace repeats by the nearest unused index, trying +d before -d
    used = set()
    out = []
    for i in idx:
        i = int(i)
        if i in used:
            for d in range(1, size):
                if i + d < size and i + d not in used:
                    i = i + d
                    break
                if i - d >= 0 and i - d not in used:
                    i = i - d
                    break
        used.add(i)
        out.append(i)
    return out


def decode_mask(position, N, K):
    """Floor the continuous slots into a legal Mask (unique channels, unique bins per row)."""
    pos = np.asarray(position)
    chans = np.clip(np.floor(pos[:, 0]), 0, N - 1).astype(np.int64)
    bins = np.clip(np.floor(pos[:, 1:]), 0, K - 1).astype(np.int64)
    elv = _dedup(chans, N)
    fsm = [_dedup(row, K) for row in bins]
    return Mask(np.array(elv, dtype=np.int64), np.array(fsm, dtype=np.int64).reshape(len(elv), -1))


def update_bests(state, fitnesses):
    """Replace personal bests on strict improvement, then take the best as global best."""
    if len(fitnesses) != len(state.particles):
        raise ValueError("need one fitness per particle")
    for p, f in zip(state.particles, fitnesses):
        f = float(f)
        p.current_fitness = f
        if f > p.pbest_fitness:
            p.pbest_fitness = f
            p.pbest_position = p.position.copy()
    # first particle wins ties, so the fold is order-stable
    best = max(range(len(state.particles)), key=lambda i: (state.particles[i].pbest_fitness, -i))
    if state.particles[best].pbest_fitness > state.gbest_fitness or state.gbest_position is None:
        state.gbest_fitness = state.particles[best].pbest_fitness
        state.gbest_position = state.particles[best].pbest_position.copy()
    return state


def init_swarm(cfg):
    rng = np.random.default_rng(cfg.seed)
    upper = cfg.upper
    vlim = cfg.v_limit
    particles = []
    for _ in range(cfg.pop_size):
        x = rng.random(upper.shape) * upper
        v = (2 * rng.random(upper.shape) - 1) * vlim
        particles.append(ParticleState(x, v, x.copy()))
    return SwarmState(particles, None, -np.inf, 0, rng)


@dataclass
class PsoResult:
    mask: Mask
    fitness: float
    history: list
    state: SwarmState
    evaluations: int


def _evaluate(particles, cfg, fitness, cache):
    out = []
    for p in particles:
        m = decode_mask(p.position, cfg.N, cfg.K)
        if m not in cache:
            cache[m] = float(fitness(m))
        out.append(cache[m])
    return out


def run_pso(cfg, fitness):
    """Maximise ``fitness(mask)`` with the swarm described by ``cfg``.

    Stops after ``cfg.max_iter`` iterations or once the global best reaches
    ``cfg.target_fitness``. ``history[t]`` is the global best fitness after
    iteration t (entry 0 is the initial evaluation). Fitness values of masks
    already seen in this run are reused.
    """
    state = init_swarm(cfg)
    cache = {}
    update_bests(state, _evaluate(state.particles, cfg, fitness, cache))
    history = [state.gbest_fitness]
    upper, vlim = cfg.upper, cfg.v_limit
    while state.iteration < cfg.max_iter and state.gbest_fitness < cfg.target_fitness:
        w = ldiw(cfg.w1, cfg.w2, state.iteration, cfg.max_iter)
        for p in state.particles:
            p.velocity = update_velocity(p, state.gbest_position, w, cfg.c1, cfg.c2, state.rng, vlim)
            p.position, p.velocity = update_position(p, upper)
        update_bests(state, _evaluate(state.particles, cfg, fitness, cache))
        state.iteration += 1
        history.append(state.gbest_fitness)
    log.debug("pso finished after %d iterations, gbest=%.4f, %d distinct masks",
              state.iteration, state.gbest_fitness, len(cache))
    mask = decode_mask(state.gbest_position, cfg.N, cfg.K)
    return PsoResult(mask, state.gbest_fitness, history, state, len(cache))


def with_dims(cfg, N, K):
    """Copy of ``cfg`` with the search-space dimensions set from a feature tensor."""
    return replace(cfg, N=N, K=K)
