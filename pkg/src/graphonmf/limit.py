"""Graphon McKean-Vlasov limit system built by coupled Picard iteration.

The law ``μᵘ_t`` of the limit path at label ``u`` is represented by an
ensemble of ``M`` particles for each grid label ``u_j = j/m``.  One Picard
step freezes the current flow, forms the smoothed measures ``[Gν_t]ᵘ`` and
re-simulates every ensemble from the same initial draws and the same Brownian
increments, so successive iterates are pathwise coupled and the residual
measures the contraction directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import LabelMixture
from .errors import CrossBlockPair, NoConvergence
from .graphon import smoothing_weights, uniform_labels
from .particles import TrajectoryEnsemble, _advance, run_replicas
from .rng import BrownianStore
from .transport import DiscreteMeasure, coupled_sup_distance

# cached increments are kept in memory up to this many floats
_INCREMENT_CACHE = 25_000_000
# atoms of the smoothed measure used per pairwise-kernel evaluation
DEFAULT_KERNEL_BUDGET = 4096


@dataclass
class MeasureFlow:
    """Per-label ensembles ``paths[step, j, k]`` for labels ``j/m``."""

    paths: np.ndarray
    times: np.ndarray
    residuals: list = field(default_factory=list)
    converged: bool = False
    graphon: object = None
    model: object = None
    initial: object = None
    config: object = None
    kernel_atoms: int = None

    @property
    def grid_size(self):
        return self.paths.shape[1]

    @property
    def ensemble_size(self):
        return self.paths.shape[2]

    @property
    def dim(self):
        return self.paths.shape[3]

    @property
    def labels(self):
        return uniform_labels(self.grid_size)

    @property
    def iterations(self):
        return len(self.residuals)

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else math.inf

    def ensemble(self, j):
        """Paths ``(steps+1, M, d)`` of grid label ``j/m`` (1-based ``j``)."""
        return self.paths[:, j - 1]

    def measure(self, j, step=-1):
        return DiscreteMeasure(self.paths[step, j - 1])

    def manifest(self):
        return {
            "grid_size": self.grid_size,
            "ensemble_size": self.ensemble_size,
            "dim": self.dim,
            "horizon": float(self.times[-1]),
            "n_steps": len(self.times) - 1,
            "dt": float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0,
            "iterations": self.iterations,
            "residuals": [float(r) for r in self.residuals],
            "converged": self.converged,
        }

    def to_dir(self, path, n_times=11):
        """Write ``label_XXXX.csv`` files (``step, member, x1..xd``) at ``n_times`` time points."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        S = len(self.times) - 1
        steps = np.unique(np.round(np.linspace(0, S, min(n_times, S + 1))).astype(int))
        M, d = self.ensemble_size, self.dim
        s_col, k_col = np.meshgrid(steps, np.arange(M), indexing="ij")
        header = "step,member," + ",".join(f"x{k + 1}" for k in range(d))
        for j in range(self.grid_size):
            data = self.paths[steps, j]
            table = np.column_stack([s_col.ravel(), k_col.ravel()]
                                    + [data[..., c].ravel() for c in range(d)])
            np.savetxt(path / f"label_{j + 1:04d}.csv", table, delimiter=",", header=header,
                       comments="", fmt=["%d", "%d"] + ["%.17g"] * d)
        return steps


class LimitEnvironment:
    """Smoothed measures ``[Gν_t]ᵘ`` of a frozen flow at a fixed set of labels.

    Model summaries are computed once per time step and shared by every caller
    (replicas, particle counts with the same labels).
    """

    def __init__(self, paths, weights, model, kernel_atoms=None):
        self.paths = paths
        self.rows, self.row_index = LabelMixture.dedupe(weights)
        self.model = model
        self.kernel_atoms = kernel_atoms
        self._cache = {}

    @classmethod
    def from_flow(cls, flow, labels):
        weights = smoothing_weights(flow.graphon, np.asarray(labels, dtype=float),
                                    flow.grid_size)
        return cls(flow.paths, weights, flow.model, flow.kernel_atoms)

    def family(self, step):
        return LabelMixture(self.paths[step], self.rows, self.row_index, self.kernel_atoms)

    def summary(self, step):
        if step not in self._cache:
            self._cache[step] = self.model.summarize(self.family(step))
        return self._cache[step]

    def smoothed(self, label_pos, step):
        """``[Gν_t]ᵘ`` for the ``label_pos``-th label as a DiscreteMeasure."""
        return self.family(step).measure(label_pos)


def _kernel_budget(model, m):
    if "family" not in model.needs:
        return None
    return max(1, DEFAULT_KERNEL_BUDGET // m)


def run_labels(env, x0, keys, model, config, store, record=True, on_step=None):
    """Simulate ``x0`` of shape ``(L, Q, d)`` under the frozen environment.

    ``keys`` are the ``L*Q`` label-major Brownian keys.  Returns the path array
    ``(steps+1, L, Q, d)`` when ``record`` is set, else the terminal positions.
    """
    L, Q, d = x0.shape
    dt = config.step_size
    x = x0
    paths = [x] if record else None
    for s in range(config.n_steps):
        dw = store.increments(keys, s, model.dim_noise, dt).reshape(L, Q, -1)
        x = _advance(x, model, env.summary(s), dw, dt)
        if record:
            paths.append(x)
        if on_step is not None:
            on_step(s + 1, x)
    return np.stack(paths) if record else x


class _Antithetic:
    """Noise source pairing member ``k`` with ``k + M/2`` through ``dW -> -dW``."""

    def __init__(self, store, m):
        self._store = store
        self._m = m

    def increments(self, keys, step, dim, dt):
        z = self._store.increments(keys, step, dim, dt).reshape(self._m, -1, dim)
        return np.concatenate([z, -z], axis=1).reshape(-1, dim)


def _flow_start(initial, store, m, M, antithetic):
    index = np.arange(1, m + 1)
    half = M // 2 if antithetic else M
    ii, kk = np.meshgrid(index, np.arange(half), indexing="ij")
    keys = store.keys(ii.ravel(), m, 0, kk.ravel(), stream="flow-brownian")
    if not antithetic:
        return initial.sample(store, index, m, members=M, stream="flow-init"), keys, store
    init_keys = store.keys(ii.ravel(), m, 0, kk.ravel(), stream="flow-init")
    u = ii.ravel() / m
    z = store.normals(init_keys, initial.dim)
    v = store.uniforms(init_keys, 1)[:, 0]
    x0 = np.concatenate([initial._draw(u, z, v).reshape(m, half, -1),
                         initial._draw(u, -z, 1.0 - v).reshape(m, half, -1)], axis=1)
    return x0, keys, _Antithetic(store, m)


def picard_solve(g, model, initial, m, M, config, tol=1e-3, max_iter=25, store=None,
                 kernel_atoms=None, antithetic=False):
    """Fixed point of the frozen-measure map on an ``m``-label grid with ``M`` particles per label.

    Iteration 0 is the flow that stays at the initial draws.  Raises
    :class:`NoConvergence` (carrying the last flow) if the sup-over-labels
    coupled distance between iterates is still ``>= tol`` after ``max_iter``.
    With ``antithetic`` the second half of every ensemble mirrors the first
    (negated normals, reflected uniforms, negated increments).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if initial.dim != model.dim_state:
        raise ValueError("initial law and model dimensions differ")
    if antithetic and M % 2:
        raise ValueError("antithetic ensembles need an even size")
    store = store if store is not None else BrownianStore(config.master_seed)
    weights = smoothing_weights(g, uniform_labels(m), m)
    kernel_atoms = kernel_atoms if kernel_atoms is not None else _kernel_budget(model, m)
    x0, keys, source = _flow_start(initial, store, m, M, antithetic)
    S = config.n_steps
    if S * m * M * model.dim_noise <= _INCREMENT_CACHE:
        cached = CachedIncrements(source, keys, S, model.dim_noise, config.step_size)
    else:
        cached = source

    paths = np.broadcast_to(x0, (S + 1,) + x0.shape)
    flow = MeasureFlow(paths, config.times, [], False, g, model, initial, config, kernel_atoms)
    for _ in range(max_iter):
        env = LimitEnvironment(flow.paths, weights, model, kernel_atoms)
        new = run_labels(env, x0, keys, model, config, cached)
        diff = np.max(np.sum((new - flow.paths) ** 2, axis=3), axis=0)  # (m, M)
        residual = float(np.sqrt(np.max(np.mean(diff, axis=1))))
        flow = MeasureFlow(new, config.times, flow.residuals + [residual], False, g, model,
                           initial, config, kernel_atoms)
        if residual < tol:
            flow.converged = True
            return flow
    raise NoConvergence(max_iter, flow.residual, flow)


class CachedIncrements:
    """Precomputed increments for a fixed key set, reused across Picard iterations."""

    def __init__(self, store, keys, n_steps, dim, dt):
        self._keys = keys
        self._store = store
        self._dt = dt
        self._data = [store.increments(keys, s, dim, dt) for s in range(n_steps)]

    def increments(self, keys, step, dim, dt):
        if keys is self._keys and dt == self._dt and self._data[step].shape[1] == dim:
            return self._data[step]
        return self._store.increments(keys, step, dim, dt)


def _check_grid(flow, config):
    if config.n_steps != len(flow.times) - 1 or not np.isclose(
            config.step_size, flow.times[1] - flow.times[0], rtol=1e-12, atol=0):
        raise ValueError("configuration time grid differs from the flow's")


def limit_start(flow, n, store, replica=0, indices=None):
    """Initial points and Brownian keys of the limit paths at labels ``i/n``."""
    index = np.arange(1, n + 1) if indices is None else np.asarray(indices, dtype=np.int64)
    x0 = flow.initial.sample(store, index, n, replica=replica, members=1, stream="init")
    keys = store.keys(index, n, replica, 0, stream="brownian")
    return x0, keys


def coupled_limit_particles(flow, g, model, n, store, config=None, replicas=None,
                            indices=None, threads=1, env=None):
    """One limit path per label ``i/n`` driven by the finite system's own noise.

    The initial points and increments come from the same label keys that
    :func:`~graphonmf.particles.build_system` uses, so ``X^{i,N} - X^{u_i}`` is
    the coupled difference.  Paths are recorded when ``config.record_full_paths``.
    """
    config = config if config is not None else flow.config
    _check_grid(flow, config)
    index = np.arange(1, n + 1) if indices is None else np.asarray(indices, dtype=np.int64)
    if g is not flow.graphon:
        flow = MeasureFlow(flow.paths, flow.times, flow.residuals, flow.converged, g, model,
                           flow.initial, flow.config, flow.kernel_atoms)
    env = env if env is not None else LimitEnvironment.from_flow(flow, index / n)
    R = replicas if replicas is not None else config.replicas

    def one(r):
        x0, keys = limit_start(flow, n, store, r, index)
        out = run_labels(env, x0, keys, model, config, store, record=True)[:, :, 0]
        return out

    runs = run_replicas(one, R, threads)
    paths = np.stack(runs)  # (R, S+1, N, d)
    sup = np.max(np.sum(paths**2, axis=3), axis=1)
    return TrajectoryEnsemble(config.times, paths[:, -1], sup,
                              paths if config.record_full_paths else None, index / n)


def _block_id(u, boundaries):
    b = np.asarray(boundaries, dtype=float)
    return int(np.clip(np.searchsorted(b, u - 1e-9, side="left") - 1, 0, len(b) - 2))


def continuity_check(flow, pairs, store=None, members=None, g=None, model=None):
    """``W_{2,T}`` ratios ``d(μᵘ, μᵛ) / |u - v|`` from pair-coupled ensembles.

    Both labels of a pair are simulated from the same initial uniforms/normals
    and Brownian increments under the frozen flow, so the coupled sup distance
    bounds ``W_{2,T}(μᵘ, μᵛ)``.
    """
    g = g if g is not None else flow.graphon
    model = model if model is not None else flow.model
    store = store if store is not None else BrownianStore(flow.config.master_seed)
    M = members if members is not None else flow.ensemble_size
    blocks = np.union1d(np.asarray(g.blocks, dtype=float), flow.initial.blocks)
    out = []
    for p, (u, v) in enumerate(pairs):
        u, v = float(u), float(v)
        if _block_id(u, blocks) != _block_id(v, blocks):
            raise CrossBlockPair(f"labels {u} and {v} lie in different blocks")
        if u == v:
            out.append(((u, v), 0.0))
            continue
        env = LimitEnvironment(flow.paths, smoothing_weights(g, np.array([u, v]),
                                                             flow.grid_size),
                               model, flow.kernel_atoms)
        init_keys = store.keys(np.full(M, p + 1), 1, 0, np.arange(M), stream="pair-init")
        x0 = np.stack([flow.initial.sample_keys(store, init_keys, np.full(M, lab))
                       for lab in (u, v)])
        bkeys = store.keys(np.full(M, p + 1), 1, 0, np.arange(M), stream="pair-brownian")
        keys = np.concatenate([bkeys, bkeys])
        paths = run_labels(env, x0, keys, model, flow.config, store)
        out.append(((u, v), coupled_sup_distance(paths[:, 0].swapaxes(0, 1),
                                                 paths[:, 1].swapaxes(0, 1)) / abs(u - v)))
    return out
