"""Finite N-particle system with step-graphon interaction.

Particle ``i`` carries label ``u_i = i/N`` and interacts with particle ``j``
through ``ξ_ij = G(u_i, u_j)``; its drift and diffusion see the neighbourhood
empirical measure ``Σ_j ξ_ij / N_i δ_{X_j}`` with ``N_i = Σ_j ξ_ij``.  The
diagonal term ``j = i`` is kept whenever ``ξ_ii > 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import LabelMixture
from .errors import IsolatedParticle, NonFiniteState
from .graphon import Constant, _PiecewiseConstant, discretize, uniform_labels
from .transport import DiscreteMeasure

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float = 1.0
    dt: float = 1e-3
    replicas: int = 16
    master_seed: int = 0
    record_full_paths: bool = False

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.dt <= self.horizon:
            raise ValueError("dt must lie in (0, horizon]")
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")

    @property
    def n_steps(self):
        return int(math.ceil(self.horizon / self.dt - 1e-9))

    @property
    def step_size(self):
        """Actual step ``T / n_steps`` so the grid ends exactly at the horizon."""
        return self.horizon / self.n_steps

    @property
    def times(self):
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


def interaction_rows(g, n):
    """Distinct rows of ``ξ_ij = g(i/n, j/n)`` and the row used by each particle.

    Piecewise-constant graphons only need one row per block; other kernels go
    through the dense matrix, which is capped at ``DENSE_LIMIT`` particles.
    """
    u = uniform_labels(n)
    if isinstance(g, Constant):
        block = np.zeros(n, dtype=np.int64)
        reps = u[:1]
    elif isinstance(g, _PiecewiseConstant):
        block = g._index(u)
        first = np.unique(block, return_index=True)[1]
        reps = u[first]
        block = np.searchsorted(block[first], block)
    else:
        if n > DENSE_LIMIT:
            raise ValueError(f"dense interaction limited to {DENSE_LIMIT} particles for "
                             f"{g.kind} graphons")
        rows, inverse = np.unique(discretize(g, n).values, axis=0, return_inverse=True)
        return rows, inverse.reshape(-1)
    rows = np.clip(np.asarray(g(reps[:, None], u[None, :]), dtype=float), 0.0, 1.0)
    rows, inv = np.unique(rows, axis=0, return_inverse=True)
    return rows, inv.reshape(-1)[block]


class ParticleSystemState:
    """Positions of one replica of the finite system plus its interaction data."""

    def __init__(self, positions, rows, row_index, labels, keys, step=0, dt=None,
                 replica=0, graphon=None, initial=None, store=None, weights=None):
        self.positions = np.asarray(positions, dtype=float)
        self.rows = rows
        self.row_index = row_index
        self.labels = labels
        self.keys = keys
        self.step = step
        self.time = 0.0 if dt is None else step * dt
        self.replica = replica
        self.graphon = graphon
        self.initial = initial
        self.store = store
        self._weights = rows / rows.sum(axis=1, keepdims=True) if weights is None else weights

    @property
    def n_particles(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def degrees(self):
        return self.rows.sum(axis=1)[self.row_index]

    @property
    def interaction(self):
        if self.n_particles > DENSE_LIMIT:
            raise ValueError("interaction matrix too large to materialise")
        return self.rows[self.row_index]

    def family(self):
        return LabelMixture(self.positions[:, None, :], self._weights, self.row_index)

    def copy_with(self, positions, step, dt):
        out = ParticleSystemState(positions, self.rows, self.row_index, self.labels, self.keys,
                                  step, None, self.replica, self.graphon, self.initial, self.store,
                                  self._weights)
        out.time = self.time + dt
        return out


def build_system(g, n, initial, store, replica=0):
    """Finite system at labels ``i/n`` with initial draws shared with the limit paths."""
    if n < 1:
        raise ValueError("n must be positive")
    rows, row_index = interaction_rows(g, n)
    deg = rows.sum(axis=1)
    if np.any(deg <= 0):
        bad = np.nonzero(deg[row_index] <= 0)[0] + 1
        raise IsolatedParticle(f"particles with no neighbour: {bad[:5].tolist()}")
    index = np.arange(1, n + 1)
    x0 = initial.sample(store, index, n, replica=replica, members=1, stream="init")[:, 0]
    keys = store.keys(index, n, replica, 0, stream="brownian")
    return ParticleSystemState(x0, rows, row_index, index / n, keys, replica=replica,
                               graphon=g, initial=initial, store=store)


def local_measure(state, i):
    """Neighbourhood empirical measure of particle ``i`` (1-based)."""
    if not 1 <= i <= state.n_particles:
        raise IndexError(f"particle index {i} outside 1..{state.n_particles}")
    return DiscreteMeasure(state.positions, state._weights[state.row_index[i - 1]])


def _advance(x, model, summary, dw, dt):
    new = x + model.drift_batch(x, summary) * dt + model.noise_batch(x, summary, dw)
    if not np.all(np.isfinite(new)):
        raise NonFiniteState("non-finite position after an Euler step; reduce dt")
    return new


def em_step(state, model, dt, store=None):
    """One explicit Euler-Maruyama step, measures frozen at the pre-step positions."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    store = store if store is not None else state.store
    x = state.positions[:, None, :]
    summary = model.summarize(state.family())
    dw = store.increments(state.keys, state.step, model.dim_noise, dt)[:, None, :]
    new = _advance(x, model, summary, dw, dt)[:, 0, :]
    return state.copy_with(new, state.step + 1, dt)


def iterate(state, model, config):
    """Yield ``(step, positions)`` from step 0 to ``config.n_steps``."""
    dt = config.step_size
    yield 0, state.positions
    for k in range(config.n_steps):
        state = em_step(state, model, dt)
        yield k + 1, state.positions


@dataclass
class TrajectoryEnsemble:
    """Replica paths; ``paths`` is ``(R, steps+1, N, d)`` when recorded.

    ``final`` holds the terminal positions and ``sup_sq`` the running maximum
    of ``|X_t|²`` per replica and particle.
    """

    times: np.ndarray
    final: np.ndarray
    sup_sq: np.ndarray
    paths: np.ndarray = None
    labels: np.ndarray = None

    @property
    def replicas(self):
        return self.final.shape[0]

    def to_csv(self, path):
        """Rows ``replica, step, particle, x1..xd`` (terminal step only if paths were not kept)."""
        R, N, d = self.final.shape
        if self.paths is not None:
            data, steps = self.paths, np.arange(self.paths.shape[1])
        else:
            data, steps = self.final[:, None], np.array([len(self.times) - 1])
        r, s, i = np.meshgrid(np.arange(R), steps, np.arange(1, N + 1), indexing="ij")
        cols = [r.ravel(), s.ravel(), i.ravel()]
        table = np.column_stack(cols + [data[..., k].ravel() for k in range(d)])
        header = "replica,step,particle," + ",".join(f"x{k + 1}" for k in range(d))
        fmt = ["%d", "%d", "%d"] + ["%.17g"] * d
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=fmt)


def run_replicas(fn, replicas, threads=1):
    """``[fn(r) for r in range(replicas)]``, optionally on a thread pool (order kept)."""
    if threads and threads > 1 and replicas > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(replicas)))
    return [fn(r) for r in range(replicas)]


def simulate(state, model, config, threads=1):
    """Run ``config.replicas`` replicas; replica ``r`` redraws its initial state and noise."""
    def one(r):
        st = state if r == state.replica else build_system(
            state.graphon, state.n_particles, state.initial, state.store, replica=r)
        paths = [] if config.record_full_paths else None
        sup = np.zeros(st.n_particles)
        x = st.positions
        for _, x in iterate(st, model, config):
            sup = np.maximum(sup, np.sum(x**2, axis=1))
            if paths is not None:
                paths.append(x)
        return x, sup, (np.stack(paths) if paths is not None else None)

    out = run_replicas(one, config.replicas, threads)
    final = np.stack([o[0] for o in out])
    sup = np.stack([o[1] for o in out])
    paths = np.stack([o[2] for o in out]) if config.record_full_paths else None
    return TrajectoryEnsemble(config.times, final, sup, paths, state.labels)

