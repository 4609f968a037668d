"""Graphons, step graphons and the degree-normalised smoothing operator.

Cells follow the ceiling convention: cell ``i`` (1-based) of a resolution-``n``
grid is the interval ``((i-1)/n, i/n]``, its representative label is ``i/n``,
and ``u = 0`` belongs to the first cell.  A step graphon of resolution ``n``
therefore satisfies ``G(u, v) = values[ceil(n u) - 1, ceil(n v) - 1]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import IsolatedLabel
from .transport import DiscreteMeasure

# labels within this distance of a cell boundary are assigned to the left cell,
# so that floating i/n lands in cell i
_BOUNDARY_SLACK = 1e-9


def cell_index(u, n):
    """0-based index of the resolution-``n`` cell containing ``u``."""
    u = np.asarray(u, dtype=float)
    idx = np.ceil(n * u - _BOUNDARY_SLACK).astype(np.int64)
    return np.clip(idx, 1, n) - 1


def uniform_labels(n):
    """Cell representatives ``1/n, 2/n, ..., 1``."""
    return np.arange(1, n + 1) / n


def partition_overlap(src, dst):
    """Lengths ``|A_k ∩ B_j|`` for two partitions of [0, 1] given by breakpoints."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    lo = np.maximum(src[:-1, None], dst[None, :-1])
    hi = np.minimum(src[1:, None], dst[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def _uniform_breaks(n):
    return np.arange(n + 1) / n


class Graphon:
    """Symmetric kernel on [0, 1]^2 with values in [0, 1].

    Subclasses provide closed forms for the degree and for cell integrals
    ``∫_{I_j} G(u, v) dv`` over a uniform grid.
    """

    kind = "graphon"

    def __call__(self, u, v):
        raise NotImplementedError

    @property
    def blocks(self):
        """Breakpoints of the intervals on which the kernel is Lipschitz."""
        return np.array([0.0, 1.0])

    def degree(self, u):
        raise NotImplementedError

    def cell_integrals(self, u, m):
        """Array of shape ``(len(u), m)`` with ``∫_{I_j} G(u, v) dv``."""
        raise NotImplementedError

    def min_degree(self):
        raise NotImplementedError

    def positive_degree_ae(self):
        raise NotImplementedError

    def inv_degree_integral(self):
        raise NotImplementedError

    def lipschitz_estimate(self, sampling_density):
        raise NotImplementedError

    def describe(self):
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class Constant(Graphon):
    c: float

    kind = "constant"

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"constant graphon value must lie in [0, 1], got {self.c}")

    def __call__(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return np.full(u.shape, float(self.c))

    def degree(self, u):
        return np.full(np.shape(u), float(self.c))

    def cell_integrals(self, u, m):
        return np.full((np.size(u), m), self.c / m)

    def min_degree(self):
        return float(self.c)

    def positive_degree_ae(self):
        return self.c > 0

    def inv_degree_integral(self):
        return 1.0 / self.c if self.c > 0 else math.inf

    def lipschitz_estimate(self, sampling_density):
        return 0.0

    def describe(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True, eq=False)
class PowerLaw(Graphon):
    """``G(u, v) = (u v)^p``; the degree vanishes at ``u = 0`` when ``p > 0``."""

    p: float

    kind = "power_law"

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"power-law exponent must lie in [0, 1), got {self.p}")

    def __call__(self, u, v):
        return np.power(np.asarray(u, float) * np.asarray(v, float), self.p)

    def degree(self, u):
        return np.power(np.asarray(u, float), self.p) / (1.0 + self.p)

    def cell_integrals(self, u, m):
        u = np.atleast_1d(np.asarray(u, float))
        b = np.power(_uniform_breaks(m), self.p + 1.0)
        return np.power(u, self.p)[:, None] * (np.diff(b) / (self.p + 1.0))[None, :]

    def min_degree(self):
        return 0.0 if self.p > 0 else 1.0

    def positive_degree_ae(self):
        return True

    def inv_degree_integral(self):
        return (1.0 + self.p) / (1.0 - self.p)

    def lipschitz_estimate(self, sampling_density):
        # d/du (uv)^p = p u^(p-1) v^p blows up at u = 0 for 0 < p < 1
        return math.inf if self.p > 0 else 0.0

    def describe(self):
        return {"kind": self.kind, "p": self.p}


class _PiecewiseConstant(Graphon):
    """Shared machinery for kernels constant on rectangles of a partition."""

    _breaks: np.ndarray
    _matrix: np.ndarray

    def _index(self, u):
        u = np.asarray(u, dtype=float)
        k = np.searchsorted(self._breaks, u - _BOUNDARY_SLACK, side="left") - 1
        return np.clip(k, 0, len(self._breaks) - 2)

    def __call__(self, u, v):
        return self._matrix[self._index(u), self._index(v)]

    @property
    def blocks(self):
        return self._breaks.copy()

    @property
    def _lengths(self):
        return np.diff(self._breaks)

    def _block_degrees(self):
        return self._matrix @ self._lengths

    def degree(self, u):
        return self._block_degrees()[self._index(u)]

    def cell_integrals(self, u, m):
        u = np.atleast_1d(np.asarray(u, float))
        overlap = partition_overlap(self._breaks, _uniform_breaks(m))
        return self._matrix[self._index(u)] @ overlap

    def _positive_blocks(self):
        return self._lengths > 0

    def min_degree(self):
        return float(self._block_degrees()[self._positive_blocks()].min())

    def positive_degree_ae(self):
        return bool(np.all(self._block_degrees()[self._positive_blocks()] > 0))

    def inv_degree_integral(self):
        deg = self._block_degrees()
        keep = self._positive_blocks()
        if np.any(deg[keep] <= 0):
            return math.inf
        return float(np.sum(self._lengths[keep] / deg[keep]))

    def lipschitz_estimate(self, sampling_density):
        return 0.0


class StochasticBlock(_PiecewiseConstant):
    kind = "stochastic_block"

    def __init__(self, boundaries, block_matrix):
        breaks = np.asarray(boundaries, dtype=float)
        mat = np.asarray(block_matrix, dtype=float)
        if breaks.ndim != 1 or len(breaks) < 2 or breaks[0] != 0.0 or breaks[-1] != 1.0:
            raise ValueError("boundaries must run from 0 to 1")
        if np.any(np.diff(breaks) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        k = len(breaks) - 1
        if mat.shape != (k, k):
            raise ValueError(f"block matrix must be {k}x{k}, got {mat.shape}")
        if not np.array_equal(mat, mat.T):
            raise ValueError("block matrix must be symmetric")
        if mat.min() < 0 or mat.max() > 1:
            raise ValueError("block weights must lie in [0, 1]")
        self._breaks = breaks
        self._matrix = mat

    @property
    def boundaries(self):
        return self._breaks.copy()

    @property
    def block_matrix(self):
        return self._matrix.copy()

    def block_of(self, u):
        return self._index(u)

    def describe(self):
        return {"kind": self.kind, "boundaries": self._breaks.tolist(),
                "block_matrix": self._matrix.tolist()}


class StepGraphon(_PiecewiseConstant):
    """Piecewise-constant graphon on the uniform ``n x n`` grid."""

    kind = "grid"

    def __init__(self, values):
        vals = np.array(values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1] or vals.shape[0] < 1:
            raise ValueError("step graphon values must be a non-empty square matrix")
        if not np.allclose(vals, vals.T, rtol=0, atol=1e-12):
            raise ValueError("step graphon values must be symmetric")
        if vals.min() < 0 or vals.max() > 1:
            raise ValueError("step graphon values must lie in [0, 1]")
        vals = 0.5 * (vals + vals.T)
        vals.setflags(write=False)
        self._matrix = vals
        self._breaks = _uniform_breaks(vals.shape[0])

    @property
    def resolution(self):
        return self._matrix.shape[0]

    @property
    def values(self):
        return self._matrix

    def _index(self, u):
        return cell_index(u, self.resolution)

    def describe(self):
        return {"kind": self.kind, "resolution": self.resolution}

    @classmethod
    def from_csv(cls, path):
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))

    def to_csv(self, path):
        np.savetxt(path, self._matrix, delimiter=",", fmt="%.17g")


class KernelGraphon(Graphon):
    """Externally supplied vectorised kernel; integrals fall back to quadrature.

    ``blocks`` lists breakpoints of intervals on which the kernel is expected
    to be Lipschitz.
    """

    kind = "kernel"

    def __init__(self, func, blocks=(0.0, 1.0), name="kernel", quadrature_points=256):
        self._func = func
        self._blocks = np.asarray(blocks, dtype=float)
        self.name = name
        self.quadrature_points = int(quadrature_points)

    def __call__(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return np.asarray(self._func(u, v), dtype=float)

    @property
    def blocks(self):
        return self._blocks.copy()

    def _midpoint_degree(self, u, n):
        v = (np.arange(n) + 0.5) / n
        return self(u[:, None], v[None, :]).mean(axis=1)

    def degree(self, u, quadrature_points=None):
        u = np.atleast_1d(np.asarray(u, float))
        n = quadrature_points or self.quadrature_points
        coarse = self._midpoint_degree(u, n)
        fine = self._midpoint_degree(u, 2 * n)
        # midpoint error is O(h^2): Richardson extrapolation
        return (4.0 * fine - coarse) / 3.0

    def cell_integrals(self, u, m, points_per_cell=16):
        u = np.atleast_1d(np.asarray(u, float))
        q = points_per_cell
        v = (np.arange(m * q) + 0.5) / (m * q)
        vals = self(u[:, None], v[None, :]).reshape(len(u), m, q)
        return vals.mean(axis=2) / m

    def _sample_degrees(self, n):
        return self.degree((np.arange(n) + 0.5) / n)

    def min_degree(self, sampling_density=256):
        grid = np.concatenate([[0.0], np.arange(1, sampling_density + 1) / sampling_density])
        return float(max(self.degree(grid).min(), 0.0))

    def positive_degree_ae(self, sampling_density=256):
        return bool(np.all(self._sample_degrees(sampling_density) > 0))

    def inv_degree_integral(self):
        def f(u):
            d = float(self.degree(np.array([u]))[0])
            return math.inf if d <= 0 else 1.0 / d

        if not self.positive_degree_ae():
            return math.inf
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(f, 0.0, 1.0, limit=200)
            except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError):
                return math.inf
        if not math.isfinite(val) or val > 1e9:
            return math.inf
        return float(val)

    def _blockwise_quotient(self, n):
        grid = np.linspace(0.0, 1.0, n + 1)
        vals = self(grid[:, None], grid[None, :])
        block = np.searchsorted(self._blocks, grid - _BOUNDARY_SLACK, side="left")
        same = block[1:] == block[:-1]
        h = 1.0 / n
        du = np.abs(np.diff(vals, axis=0))[same, :] / h
        dv = np.abs(np.diff(vals, axis=1))[:, same] / h
        return float(max(du.max(initial=0.0), dv.max(initial=0.0)))

    def lipschitz_estimate(self, sampling_density):
        est = self._blockwise_quotient(sampling_density)
        finer = self._blockwise_quotient(4 * sampling_density)
        # quotients that keep growing under refinement signal an unbounded slope
        if finer > 1.5 * est + 1e-12:
            return math.inf
        return max(est, finer)

    def describe(self):
        return {"kind": self.kind, "name": self.name}


def discretize(g, n):
    """Step graphon with ``values[i, j] = g(i/n, j/n)`` (labels 1..n)."""
    if n < 1:
        raise ValueError("resolution must be positive")
    u = uniform_labels(n)
    vals = np.asarray(g(u[:, None], u[None, :]), dtype=float)
    vals = np.clip(0.5 * (vals + vals.T), 0.0, 1.0)
    return StepGraphon(vals)


def degree(g, u, quadrature_points=None):
    """``∫_0^1 g(u, v) dv``; scalar in, scalar out."""
    if quadrature_points is not None and isinstance(g, KernelGraphon):
        out = g.degree(u, quadrature_points=quadrature_points)
    else:
        out = g.degree(u)
    return float(np.ravel(out)[0]) if np.ndim(u) == 0 else np.asarray(out)


def inv_degree_integral(g):
    return g.inv_degree_integral()


@dataclass(frozen=True)
class AssumptionReport:
    min_degree: float
    g_inf_inverse: float
    inv_degree_integral: float
    lipschitz_estimate: float
    sampling_density: int
    verdicts: dict = field(default_factory=dict)

    @property
    def gpos_i(self):
        return self.verdicts["Gpos_i"]

    @property
    def gpos_ii(self):
        return self.verdicts["Gpos_ii"]

    @property
    def gposuni(self):
        return self.verdicts["Gposuni"]

    @property
    def lipmu0(self):
        return self.verdicts["lipmu0"]

    def to_dict(self):
        def num(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")

        return {
            "min_degree": num(self.min_degree),
            "g_inf_inverse": num(self.g_inf_inverse),
            "inv_degree_integral": num(self.inv_degree_integral),
            "lipschitz_estimate": num(self.lipschitz_estimate),
            "sampling_density": self.sampling_density,
            "verdicts": dict(self.verdicts),
        }


def validate_assumptions(g, sampling_density=64):
    """Evaluate the degree and regularity hypotheses on ``g``.

    ``Gposuni`` reads the supremum of the inverse degree on cell
    representatives (exact for piecewise-constant families); the Lipschitz
    figure is a sampled estimate for black-box kernels.
    """
    if sampling_density < 2:
        raise ValueError("sampling_density must be at least 2")
    if isinstance(g, KernelGraphon):
        min_deg = g.min_degree(sampling_density)
        pos_ae = g.positive_degree_ae(sampling_density)
    else:
        min_deg = g.min_degree()
        pos_ae = g.positive_degree_ae()
    g_inf_inv = 1.0 / min_deg if min_deg > 0 else math.inf
    inv_int = g.inv_degree_integral() if pos_ae else math.inf
    lip = g.lipschitz_estimate(sampling_density)
    verdicts = {
        "Gpos_i": bool(pos_ae),
        "Gpos_ii": bool(pos_ae and math.isfinite(inv_int)),
        "Gposuni": bool(math.isfinite(g_inf_inv)),
        "lipmu0": bool(math.isfinite(lip)),
    }
    # the uniform bound forces integrability of the inverse degree
    if verdicts["Gposuni"]:
        verdicts["Gpos_ii"] = True
        verdicts["Gpos_i"] = True
    return AssumptionReport(min_deg, g_inf_inv, inv_int, lip, int(sampling_density), verdicts)


def smoothing_weights(g, u, m):
    """Rows ``∫_{I_j} g(u, v) dv / ||g(u, .)||_1`` for labels ``u`` over an m-cell grid."""
    cells = np.atleast_2d(g.cell_integrals(np.atleast_1d(u), m))
    deg = cells.sum(axis=1)
    if np.any(deg <= 0):
        bad = np.atleast_1d(u)[deg <= 0]
        raise IsolatedLabel(f"zero degree at label(s) {bad[:5].tolist()}")
    return cells / deg[:, None]


def graphon_smooth(g, family, u):
    """Mixture ``||g(u,.)||^{-1} Σ_j (∫_{I_j} g(u,v) dv) μ^{u_j}`` as a DiscreteMeasure.

    ``family`` is a list of ``(label, measure)`` with labels ``j/m``.
    """
    labels = np.array([lab for lab, _ in family], dtype=float)
    m = len(labels)
    if m == 0:
        raise ValueError("empty measure family")
    if not np.allclose(np.sort(labels), uniform_labels(m), atol=1e-9):
        raise ValueError("family labels must be the grid j/m, j = 1..m")
    order = np.argsort(labels)
    w = smoothing_weights(g, float(u), m)[0]
    pts, wts = [], []
    for pos, j in enumerate(order):
        mu = family[j][1]
        pts.append(mu.points)
        wts.append(w[pos] * mu.weights)
    weights = np.concatenate(wts)
    return DiscreteMeasure(np.concatenate(pts), weights / weights.sum()).merged()
