"""Label-indexed initial laws ``u ↦ μ₀ᵘ``.

Draws go through the :class:`~graphonmf.rng.BrownianStore` so that the initial
value of particle ``i`` in the finite system and of the limit path at label
``i/N`` are the same random variable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .transport import DiscreteMeasure


def _vec(x, d=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if d is not None and x.shape[0] == 1 and d > 1:
        x = np.repeat(x, d)
    return x


def _gauss_abs_moment(d, p):
    """``E|Z|^p`` for a standard Gaussian vector in ``R^d``."""
    return math.exp(0.5 * p * math.log(2.0) + gammaln(0.5 * (d + p)) - gammaln(0.5 * d))


@dataclass(frozen=True)
class DiracLaw:
    point: tuple

    kind = "dirac"

    @property
    def dim(self):
        return len(_vec(self.point))

    def sample(self, z, v):
        return np.broadcast_to(_vec(self.point), z.shape).copy()

    def moment(self, p):
        return float(np.linalg.norm(_vec(self.point)) ** p)

    def to_measure(self):
        return DiscreteMeasure.dirac(_vec(self.point))


@dataclass(frozen=True)
class GaussianLaw:
    mean: tuple
    std: float = 1.0

    kind = "gaussian"

    @property
    def dim(self):
        return len(_vec(self.mean))

    def sample(self, z, v):
        return _vec(self.mean) + self.std * z

    def moment(self, p):
        d = len(_vec(self.mean))
        return 2.0 ** max(p - 1, 0) * (np.linalg.norm(_vec(self.mean)) ** p
                                       + self.std**p * _gauss_abs_moment(d, p))


@dataclass(frozen=True)
class DiscreteLaw:
    points: tuple
    weights: tuple = None

    kind = "discrete"

    @property
    def dim(self):
        return self._measure().dim

    def _measure(self):
        return DiscreteMeasure(np.asarray(self.points, dtype=float), self.weights)

    def sample(self, z, v):
        mu = self._measure()
        cdf = np.cumsum(mu.weights)
        idx = np.minimum(np.searchsorted(cdf, v, side="right"), len(cdf) - 1)
        return mu.points[idx]

    def moment(self, p):
        mu = self._measure()
        return float(mu.weights @ np.linalg.norm(mu.points, axis=1) ** p)

    def to_measure(self):
        return self._measure()


LAW_KINDS = {"dirac": DiracLaw, "gaussian": GaussianLaw, "discrete": DiscreteLaw}


class InitialLawFamily:
    """Base class: ``law_params(u)`` plus sampling and moment bookkeeping.

    Subclasses sample with a standard normal block ``z`` (one row per draw) and
    a uniform ``v``, both taken from the label-keyed store.
    """

    kind = "abstract"
    moment_exponent = 2.0
    dim = 1

    @property
    def blocks(self):
        return np.array([0.0, 1.0])

    @property
    def kappa(self):
        """Blockwise W2-Lipschitz constant of ``u ↦ μ₀ᵘ`` (None when undeclared)."""
        return None

    def _draw(self, u, z, v):
        raise NotImplementedError

    def moment_bound(self):
        """``sup_u ∫|x|^{2+ε} μ₀ᵘ(dx)``."""
        raise NotImplementedError

    def sample(self, store, index, resolution, replica=0, members=1, stream="init"):
        """Draws of shape ``(len(index), members, dim)`` at labels ``index/resolution``."""
        index = np.atleast_1d(np.asarray(index, dtype=np.int64))
        mem = np.arange(members, dtype=np.int64)
        ii, mm = np.meshgrid(index, mem, indexing="ij")
        keys = store.keys(ii.reshape(-1), resolution, replica, mm.reshape(-1), stream=stream)
        return self.sample_keys(store, keys, np.repeat(index / resolution, members)).reshape(
            len(index), members, self.dim)

    def sample_keys(self, store, keys, u):
        z = store.normals(keys, self.dim)
        v = store.uniforms(keys, 1)[:, 0]
        return self._draw(np.asarray(u, dtype=float), z, v)

    def describe(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Point(InitialLawFamily):
    """``μ₀ᵘ = δ_{x(u)}`` with ``x(u) = location + slope · u``."""

    location: tuple = (0.0,)
    slope: tuple = (0.0,)
    moment_exponent: float = 2.0

    kind = "point"

    @property
    def dim(self):
        return max(len(_vec(self.location)), len(_vec(self.slope)))

    @property
    def kappa(self):
        return float(np.linalg.norm(_vec(self.slope, self.dim)))

    def _draw(self, u, z, v):
        return _vec(self.location, self.dim) + u[:, None] * _vec(self.slope, self.dim)

    def moment_bound(self):
        p = 2.0 + self.moment_exponent
        ends = [_vec(self.location, self.dim) + s * _vec(self.slope, self.dim) for s in (0.0, 1.0)]
        return float(max(np.linalg.norm(e) ** p for e in ends))

    def law(self, u):
        return DiracLaw(tuple(self._draw(np.array([u]), None, None)[0]))

    def describe(self):
        return {"kind": self.kind, "location": _vec(self.location).tolist(),
                "slope": _vec(self.slope).tolist(), "moment_exponent": self.moment_exponent}


@dataclass(frozen=True)
class GaussianFamily(InitialLawFamily):
    """Isotropic ``N(mean(u), std(u)² Id)`` with affine ``mean`` and ``std`` in ``u``."""

    mean: tuple = (0.0,)
    mean_slope: tuple = (0.0,)
    std: float = 1.0
    std_slope: float = 0.0
    moment_exponent: float = 2.0

    kind = "gaussian"

    def __post_init__(self):
        if self.std < 0 or self.std + self.std_slope < 0:
            raise ValueError("std(u) must be nonnegative on [0, 1]")

    @property
    def dim(self):
        return max(len(_vec(self.mean)), len(_vec(self.mean_slope)))

    @property
    def kappa(self):
        # W2 between isotropic Gaussians: sqrt(|Δm|² + d Δs²)
        return float(math.sqrt(np.sum(_vec(self.mean_slope, self.dim) ** 2)
                               + self.dim * self.std_slope**2))

    def _params(self, u):
        m = _vec(self.mean, self.dim) + u[:, None] * _vec(self.mean_slope, self.dim)
        s = self.std + self.std_slope * u
        return m, s

    def _draw(self, u, z, v):
        m, s = self._params(u)
        return m + s[:, None] * z

    def moment_bound(self):
        p = 2.0 + self.moment_exponent
        return max(GaussianLaw(tuple(m), float(s)).moment(p)
                   for m, s in zip(*self._params(np.array([0.0, 1.0]))))

    def law(self, u):
        m, s = self._params(np.array([u]))
        return GaussianLaw(tuple(m[0]), float(s[0]))

    def describe(self):
        return {"kind": self.kind, "mean": _vec(self.mean).tolist(),
                "mean_slope": _vec(self.mean_slope).tolist(), "std": self.std,
                "std_slope": self.std_slope, "moment_exponent": self.moment_exponent}


@dataclass(frozen=True)
class BlockConstant(InitialLawFamily):
    """One law per label interval ``(boundaries[k], boundaries[k+1]]``."""

    boundaries: tuple = (0.0, 1.0)
    laws: tuple = field(default_factory=tuple)
    moment_exponent: float = 2.0

    kind = "block_constant"

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must increase from 0 to 1")
        if len(self.laws) != len(b) - 1:
            raise ValueError(f"need {len(b) - 1} laws, got {len(self.laws)}")
        if len({law.dim for law in self.laws}) != 1:
            raise ValueError("all block laws must share one dimension")

    @property
    def dim(self):
        return self.laws[0].dim

    @property
    def blocks(self):
        return np.asarray(self.boundaries, dtype=float)

    @property
    def kappa(self):
        return 0.0

    def block_of(self, u):
        b = self.blocks
        return np.clip(np.searchsorted(b, np.asarray(u) - 1e-9, side="left") - 1, 0, len(b) - 2)

    def _draw(self, u, z, v):
        out = np.empty((len(u), self.dim))
        k = self.block_of(u)
        for j, law in enumerate(self.laws):
            sel = k == j
            if np.any(sel):
                out[sel] = law.sample(z[sel], v[sel])
        return out

    def moment_bound(self):
        p = 2.0 + self.moment_exponent
        return max(law.moment(p) for law in self.laws)

    def law(self, u):
        return self.laws[int(self.block_of(np.array([u]))[0])]

    def describe(self):
        def spec(law):
            d = {"kind": law.kind}
            d.update({k: (np.asarray(v, dtype=float).ravel().tolist() if isinstance(v, (tuple, list))
                          else v) for k, v in law.__dict__.items() if v is not None})
            return d

        return {"kind": self.kind, "boundaries": self.blocks.tolist(),
                "laws": [spec(law) for law in self.laws], "moment_exponent": self.moment_exponent}
