"""Drift and diffusion coefficients ``b(x, μ)`` and ``σ(x, μ)``.

Coefficients are evaluated in batch against a :class:`LabelMixture`: a set of
per-label particle ensembles plus mixing rows, which covers neighbourhood
empirical measures of the finite system as well as graphon-smoothed laws of
the limit system.  Measure statistics (moments, reflection gaps) are computed
once per distinct mixing row and broadcast to the query points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .transport import DiscreteMeasure, _quantile_cost, w2_1d, w2_exact


class LabelMixture:
    """Family of measures ``μ_l = Σ_j rows[row_index[l], j] · Unif(atoms[j])``.

    ``atoms`` has shape ``(m, M, d)``; ``rows`` ``(U, m)`` holds the distinct
    mixing weights and ``row_index`` maps each of the ``L`` measures to one.
    ``kernel_atoms`` caps the atoms per label used by pairwise kernels.
    """

    def __init__(self, atoms, rows, row_index=None, kernel_atoms=None):
        self.atoms = np.asarray(atoms, dtype=float)
        if self.atoms.ndim != 3:
            raise ValueError("atoms must have shape (labels, members, dim)")
        self.rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if self.rows.shape[1] != self.atoms.shape[0]:
            raise DimensionMismatch("mixing rows and atom labels disagree")
        if row_index is None:
            row_index = np.arange(self.rows.shape[0])
        self.row_index = np.asarray(row_index, dtype=np.int64)
        self.kernel_atoms = kernel_atoms

    @classmethod
    def from_measure(cls, mu):
        return cls(mu.points[:, None, :], mu.weights[None, :])

    @staticmethod
    def dedupe(weights):
        """Distinct rows of a weight matrix and the inverse map."""
        rows, inverse = np.unique(np.asarray(weights, float), axis=0, return_inverse=True)
        return rows, inverse.reshape(-1)

    def with_atoms(self, atoms):
        return LabelMixture(atoms, self.rows, self.row_index, self.kernel_atoms)

    @property
    def dim(self):
        return self.atoms.shape[2]

    @property
    def n_measures(self):
        return len(self.row_index)

    def flat_row(self, u, cap=None):
        """Atoms and weights of distinct measure ``u``; zero-weight labels dropped."""
        atoms = self.atoms if cap is None else self.atoms[:, :cap]
        m, M, d = atoms.shape
        row = self.rows[u]
        keep = row > 0
        pts = atoms[keep].reshape(-1, d)
        w = np.repeat(row[keep] / M, M)
        return pts, w

    def measure(self, l):
        pts, w = self.flat_row(self.row_index[l])
        return DiscreteMeasure(pts, w / w.sum())


class Summary:
    """Per-distinct-measure statistics requested by a model."""

    def __init__(self, family, stats):
        self.family = family
        self.row_index = family.row_index
        self.stats = stats

    def __getitem__(self, name):
        return self.stats[name]

    def per_measure(self, name):
        return self.stats[name][self.row_index]


def _reflection_gaps(family):
    """``W2(μ_u, S#μ_u)`` for each distinct row, with ``S x = -x``."""
    m, M, d = family.atoms.shape
    out = np.empty(family.rows.shape[0])
    if d == 1:
        flat = family.atoms.reshape(-1)
        order = np.argsort(flat, kind="stable")
        xs = flat[order]
        label_of = np.repeat(np.arange(m), M)[order]
        for u, row in enumerate(family.rows):
            ws = row[label_of] / M
            ws = ws / ws.sum()
            out[u] = math.sqrt(max(_quantile_cost(xs, ws, -xs[::-1], ws[::-1]), 0.0))
        return out
    for u in range(family.rows.shape[0]):
        pts, w = family.flat_row(u)
        mu = DiscreteMeasure(pts, w / w.sum())
        out[u] = w2_exact(mu, mu.dilate(-1.0))[0]
    return out


def summarize(family, needs):
    stats = {}
    if "m1" in needs or "m2" in needs:
        stats["m1"] = family.rows @ family.atoms.mean(axis=1)
        stats["m2"] = family.rows @ np.sum(family.atoms**2, axis=2).mean(axis=1)
    if "gap" in needs:
        stats["gap"] = _reflection_gaps(family)
    return Summary(family, stats)


def _kernel_average(func, x, family, row_index, out_shape, chunk=4_000_000):
    """``Σ_k w_k func(x_q, y_k)`` for queries grouped by measure."""
    L, Q, d = x.shape
    out = np.zeros((L, Q) + out_shape)
    for u in np.unique(row_index):
        sel = np.nonzero(row_index == u)[0]
        pts, w = family.flat_row(u, family.kernel_atoms)
        w = w / w.sum()
        xq = x[sel].reshape(-1, d)
        step = max(1, chunk // max(len(pts), 1))
        res = np.empty((len(xq),) + out_shape)
        for s in range(0, len(xq), step):
            vals = func(xq[s:s + step, None, :], pts[None, :, :])
            res[s:s + step] = np.tensordot(vals, w, axes=([1], [0])) if vals.ndim == 2 \
                else np.einsum("pk...,k->p...", vals, w)
        out[sel] = res.reshape((len(sel), Q) + out_shape)
    return out


# ---------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class Zero:
    kind = "zero"
    needs = frozenset()

    def drift(self, x, summary):
        return np.zeros_like(x)

    def matrix(self, x, summary, n):
        return np.zeros(x.shape + (n,))

    def noise(self, x, summary, dw):
        return np.zeros_like(x)

    def lipschitz(self, d, n):
        return 0.0


@dataclass(frozen=True)
class LinearMeanReversion:
    """``b(x, μ) = -rate (x - mean(μ))``."""

    rate: float = 1.0
    kind = "linear_mean_reversion"
    needs = frozenset({"m1"})

    def drift(self, x, summary):
        return -self.rate * (x - summary.per_measure("m1")[:, None, :])

    def lipschitz(self, d, n):
        return abs(self.rate)


@dataclass(frozen=True)
class ConstantDiffusion:
    """``σ(x, μ) = scale · Id``."""

    scale: float = 1.0
    kind = "constant"
    needs = frozenset()

    def matrix(self, x, summary, n):
        eye = np.eye(x.shape[-1], n)
        return np.broadcast_to(self.scale * eye, x.shape + (n,)).copy()

    def noise(self, x, summary, dw):
        return self.scale * dw[..., : x.shape[-1]]

    def lipschitz(self, d, n):
        return 0.0


# name -> (kernel, Lipschitz constant of the kernel in (x, y) jointly)
DRIFT_KERNELS = {
    "attraction": (lambda x, y: y - x, 1.0),
    "sine": (lambda x, y: np.sin(y - x), 1.0),
    "saturated_attraction": (lambda x, y: np.tanh(y - x), 1.0),
}

# name -> (scalar field φ with σ̃ = φ · Id, Lipschitz constant of φ)
DIFFUSION_KERNELS = {
    "sine_modulated": (
        lambda x, y: 1.0 + 0.5 * np.sin(np.sum(y - x, axis=-1) / math.sqrt(x.shape[-1])),
        0.5,
    ),
}


@dataclass(frozen=True)
class ScalarKernel:
    """Pairwise interaction ``∫ k(x, y) μ(dy)`` from a named built-in kernel."""

    kernel: str
    scale: float = 1.0
    role: str = "drift"
    kind = "scalar_kernel"
    needs = frozenset({"family"})

    def __post_init__(self):
        table = DRIFT_KERNELS if self.role == "drift" else DIFFUSION_KERNELS
        if self.kernel not in table:
            raise KeyError(f"unknown {self.role} kernel {self.kernel!r}; "
                           f"known: {sorted(table)}")

    def drift(self, x, summary):
        func = DRIFT_KERNELS[self.kernel][0]
        return self.scale * _kernel_average(func, x, summary.family, summary.row_index,
                                            (x.shape[-1],))

    def _phi(self, x, summary):
        func = DIFFUSION_KERNELS[self.kernel][0]
        return self.scale * _kernel_average(func, x, summary.family, summary.row_index, ())

    def matrix(self, x, summary, n):
        phi = self._phi(x, summary)
        return phi[..., None, None] * np.eye(x.shape[-1], n)

    def noise(self, x, summary, dw):
        return self._phi(x, summary)[..., None] * dw[..., : x.shape[-1]]

    def lipschitz(self, d, n):
        if self.role == "drift":
            return abs(self.scale) * DRIFT_KERNELS[self.kernel][1]
        # Frobenius norm of φ · Id is |φ| sqrt(min(d, n))
        return abs(self.scale) * DIFFUSION_KERNELS[self.kernel][1] * math.sqrt(min(d, n))


# name -> (f(x, m1, m2), Lipschitz constant w.r.t. |x - x'| + W2)
DRIFT_MOMENTS = {
    "tanh_mean": (lambda x, m1, m2: -x + np.tanh(m1[:, None, :]), 1.0),
    "decay": (lambda x, m1, m2: -x, 1.0),
}

# name -> (scalar φ(m1, m2) with σ = φ · Id, Lipschitz constant of φ in W2)
DIFFUSION_MOMENTS = {
    # |sqrt(1 + m2(μ)) - sqrt(1 + m2(ν))| <= |W2(μ, δ0) - W2(ν, δ0)| <= W2(μ, ν)
    "sqrt_one_plus_m2": (lambda m1, m2: np.sqrt(1.0 + m2), 1.0),
}


@dataclass(frozen=True)
class MomentFunctional:
    """Coefficient built from the first two moments of the measure."""

    function: str
    scale: float = 1.0
    role: str = "drift"
    kind = "moment_functional"
    needs = frozenset({"m1", "m2"})

    def __post_init__(self):
        table = DRIFT_MOMENTS if self.role == "drift" else DIFFUSION_MOMENTS
        if self.function not in table:
            raise KeyError(f"unknown {self.role} moment functional {self.function!r}; "
                           f"known: {sorted(table)}")

    def drift(self, x, summary):
        f = DRIFT_MOMENTS[self.function][0]
        return self.scale * f(x, summary.per_measure("m1"), summary.per_measure("m2"))

    def _phi(self, summary):
        f = DIFFUSION_MOMENTS[self.function][0]
        return self.scale * f(summary.per_measure("m1"), summary.per_measure("m2"))

    def matrix(self, x, summary, n):
        phi = self._phi(summary)
        return phi[:, None, None, None] * np.broadcast_to(np.eye(x.shape[-1], n), x.shape + (n,))

    def noise(self, x, summary, dw):
        return self._phi(summary)[:, None, None] * dw[..., : x.shape[-1]]

    def lipschitz(self, d, n):
        if self.role == "drift":
            return abs(self.scale) * DRIFT_MOMENTS[self.function][1]
        return abs(self.scale) * DIFFUSION_MOMENTS[self.function][1] * math.sqrt(min(d, n))


@dataclass(frozen=True)
class ReflectionGap:
    """``b(x, μ) = -rate · x + strength · W2(μ, S#μ) e`` with ``S x = -x``.

    ``e`` is the unit diagonal vector.  The drift vanishes on symmetric laws and
    reacts at the full Lipschitz rate to asymmetry, which makes the empirical
    fluctuation of ``W2`` visible in the particle error.
    """

    rate: float = 1.0
    strength: float = 0.5
    kind = "reflection_gap"
    needs = frozenset({"gap"})

    def drift(self, x, summary):
        d = x.shape[-1]
        gap = summary.per_measure("gap")[:, None, None] / math.sqrt(d)
        return -self.rate * x + self.strength * gap

    def lipschitz(self, d, n):
        # |W2(μ, Sμ) - W2(ν, Sν)| <= W2(μ, ν) + W2(Sμ, Sν) = 2 W2(μ, ν)
        return abs(self.rate) + 2.0 * abs(self.strength)


DRIFT_KINDS = {
    "zero": Zero,
    "linear_mean_reversion": LinearMeanReversion,
    "scalar_kernel": ScalarKernel,
    "moment_functional": MomentFunctional,
    "reflection_gap": ReflectionGap,
}

DIFFUSION_KINDS = {
    "zero": Zero,
    "constant": ConstantDiffusion,
    "scalar_kernel": ScalarKernel,
    "moment_functional": MomentFunctional,
}


@dataclass(frozen=True)
class DynamicsModel:
    drift: object
    diffusion: object
    dim_state: int = 1
    dim_noise: int = None
    declared_lipschitz: float = None

    def __post_init__(self):
        if self.dim_noise is None:
            object.__setattr__(self, "dim_noise", self.dim_state)
        if self.dim_state < 1 or self.dim_noise < 1:
            raise ValueError("dimensions must be positive")
        if getattr(self.diffusion, "role", "diffusion") != "diffusion":
            raise ValueError("diffusion coefficient built with role='drift'")
        if getattr(self.drift, "role", "drift") != "drift":
            raise ValueError("drift coefficient built with role='diffusion'")
        computed = self.drift.lipschitz(self.dim_state, self.dim_noise) \
            + self.diffusion.lipschitz(self.dim_state, self.dim_noise)
        declared = self.declared_lipschitz
        if declared is None:
            declared = computed if computed > 0 else 1.0
        if not (math.isfinite(declared) and declared > 0):
            raise ValueError("declared Lipschitz constant must be finite and positive")
        object.__setattr__(self, "declared_lipschitz", float(declared))
        if not math.isfinite(self.base_bound):
            raise ValueError("|b(0, δ0)| + |σ(0, δ0)| must be finite")

    @property
    def needs(self):
        return self.drift.needs | self.diffusion.needs

    @property
    def is_zero(self):
        return isinstance(self.drift, Zero) and isinstance(self.diffusion, Zero)

    def summarize(self, family):
        return summarize(family, self.needs)

    def drift_batch(self, x, summary):
        return self.drift.drift(x, summary)

    def noise_batch(self, x, summary, dw):
        return self.diffusion.noise(x, summary, dw)

    def diffusion_batch(self, x, summary):
        return self.diffusion.matrix(x, summary, self.dim_noise)

    @property
    def base_bound(self):
        origin = DiscreteMeasure.dirac(np.zeros(self.dim_state))
        x = np.zeros(self.dim_state)
        return float(np.linalg.norm(eval_drift(self, x, origin))
                     + np.linalg.norm(eval_diffusion(self, x, origin)))

    def describe(self):
        def spec(c):
            out = {"kind": c.kind}
            out.update({k: v for k, v in c.__dict__.items() if k != "role"})
            return out

        return {"drift": spec(self.drift), "diffusion": spec(self.diffusion),
                "dim_state": self.dim_state, "dim_noise": self.dim_noise,
                "declared_lipschitz": self.declared_lipschitz}


def _single(model, x, mu):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.dim_state or mu.dim != model.dim_state:
        raise DimensionMismatch(f"model has state dimension {model.dim_state}, got "
                                f"x of size {x.shape[0]} and measure of dimension {mu.dim}")
    family = LabelMixture.from_measure(mu)
    return x[None, None, :], model.summarize(family)


def eval_drift(model, x, mu):
    xb, summary = _single(model, x, mu)
    return model.drift_batch(xb, summary)[0, 0]


def eval_diffusion(model, x, mu):
    xb, summary = _single(model, x, mu)
    return model.diffusion_batch(xb, summary)[0, 0]


def _w2(mu, nu):
    return w2_1d(mu, nu) if mu.dim == 1 else w2_exact(mu, nu)[0]


def lipschitz_probe(model, trials=1000, seed=0, max_atoms=5):
    """Largest observed ``(|Δb| + |Δσ|) / (|Δx| + W2)`` over random pairs."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    d = model.dim_state
    best = 0.0
    for _ in range(trials):
        x = rng.normal(0.0, 2.0, d)
        k = rng.integers(1, max_atoms + 1)
        pts = rng.normal(0.0, 2.0, (k, d))
        w = rng.dirichlet(np.ones(k))
        if rng.random() < 0.5:
            eps = 10.0 ** rng.uniform(-3, 0)
            x2 = x + eps * rng.normal(size=d)
            pts2 = pts + eps * rng.normal(size=pts.shape)
            w2 = w
        else:
            x2 = rng.normal(0.0, 2.0, d)
            k2 = rng.integers(1, max_atoms + 1)
            pts2 = rng.normal(0.0, 2.0, (k2, d))
            w2 = rng.dirichlet(np.ones(k2))
        mu, nu = DiscreteMeasure(pts, w), DiscreteMeasure(pts2, w2)
        denom = float(np.linalg.norm(x - x2)) + _w2(mu, nu)
        if denom <= 1e-12:
            continue
        num = float(np.linalg.norm(eval_drift(model, x, mu) - eval_drift(model, x2, nu))
                    + np.linalg.norm(eval_diffusion(model, x, mu) - eval_diffusion(model, x2, nu)))
        best = max(best, num / denom)
    return best
