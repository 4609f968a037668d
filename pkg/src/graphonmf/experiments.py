"""Convergence experiments: coupled finite-vs-limit errors and empirical-measure rates.

Each experiment solves the limit flow once, then for every particle count N
runs R replicas of the finite system in lockstep with limit paths at the same
labels.  Both consume the same label-keyed initial draws and Brownian
increments, so ``X^{i,N} - X^{u_i}`` is a pathwise coupled difference.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import AssumptionFailure, BoundaryCase, NonPositiveError
from .graphon import validate_assumptions
from .limit import LimitEnvironment, limit_start, picard_solve, run_labels
from .particles import _advance, build_system, run_replicas
from .rng import BrownianStore
from .transport import DiscreteMeasure, _quantile_cost, systematic_resample, w2_exact

# ---------------------------------------------------------------- rate model


@dataclass(frozen=True)
class RateModel:
    """Empirical-measure rate ``M_N`` in dimension ``d`` with moment exponent ``ε``."""

    dim: int
    moment_exponent: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if not self.moment_exponent > 0:
            raise ValueError("moment exponent must be positive")

    @property
    def case(self):
        if self.dim < 4:
            return "low"
        return "critical" if self.dim == 4 else "high"

    @property
    def boundary(self):
        """True when ``2 + ε`` hits the value the rate formula excludes."""
        q = 2.0 + self.moment_exponent
        if self.dim <= 4:
            return math.isclose(q, 4.0, rel_tol=0, abs_tol=1e-12)
        return math.isclose(q, self.dim / (self.dim - 2.0), rel_tol=0, abs_tol=1e-12)

    def formula(self, n):
        eps = self.moment_exponent
        tail = n ** (-eps / (2.0 + eps))
        if self.case == "low":
            return n**-0.5 + tail
        if self.case == "critical":
            return n**-0.5 * math.log(1.0 + n) + tail
        return n ** (-2.0 / self.dim) + tail

    def describe(self):
        return {"dim": self.dim, "moment_exponent": self.moment_exponent, "case": self.case,
                "boundary": self.boundary}


def m_n(rate, n, allow_boundary=False):
    """Evaluate ``M_N``.  Excluded exponents raise :class:`BoundaryCase` unless allowed."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if rate.boundary and not allow_boundary:
        raise BoundaryCase(f"2 + ε = {2 + rate.moment_exponent:g} is excluded in dimension "
                           f"{rate.dim}; pass allow_boundary=True to evaluate the formula anyway")
    return rate.formula(n)


def rate_fit(points):
    """OLS of ``log error`` on ``log N``: returns ``(slope, intercept, r_squared)``."""
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 3:
        raise ValueError("rate_fit needs at least 3 points")
    if any(n <= 0 or e <= 0 for n, e in pts):
        raise NonPositiveError("rate_fit needs positive N and errors")
    x = np.log([n for n, _ in pts])
    y = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


# ---------------------------------------------------------------- reports

CSV_COLUMNS = ("N", "statistic", "value", "stderr", "m_n", "ratio")


@dataclass
class ExperimentReport:
    scenario: str
    experiment: str
    entries: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    rate: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    wallclock: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    sup_samples: dict = field(default_factory=dict)

    def add(self, n, statistic, value, stderr, mn, ratio=None):
        if ratio is None:
            ratio = value / mn if mn > 0 else math.nan
        self.entries.append({"N": int(n), "statistic": statistic, "value": float(value),
                             "stderr": float(stderr), "m_n": float(mn), "ratio": float(ratio)})

    def series(self, statistic):
        rows = [e for e in self.entries if e["statistic"] == statistic]
        return (np.array([e["N"] for e in rows]), np.array([e["value"] for e in rows]),
                np.array([e["stderr"] for e in rows]))

    def value(self, n, statistic):
        for e in self.entries:
            if e["N"] == n and e["statistic"] == statistic:
                return e["value"]
        raise KeyError((n, statistic))

    def fit(self, statistic):
        n, v, _ = self.series(statistic)
        if len(n) >= 3 and np.all(v > 0):
            s, c, r2 = rate_fit(zip(n, v))
            self.slopes[statistic] = {"slope": s, "intercept": c, "r_squared": r2}

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for e in self.entries:
            w.writerow([e["N"], e["statistic"]] + [repr(e[k]) for k in CSV_COLUMNS[2:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def manifest(self):
        return {"scenario": self.scenario, "experiment": self.experiment, "seeds": self.seeds,
                "verdicts": self.verdicts, "rate": self.rate, "slopes": self.slopes,
                "flow": self.flow, "wallclock_seconds": self.wallclock, "notes": self.notes}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------- gating


def _verdicts(scenario):
    rep = validate_assumptions(scenario.graphon)
    out = rep.to_dict()
    kappa = scenario.initial.kappa
    out["initial_kappa"] = kappa if kappa is None or math.isfinite(kappa) else "inf"
    out["initial_moment_bound"] = scenario.initial.moment_bound()
    out["verdicts"]["lipmu0_initial"] = kappa is not None and math.isfinite(kappa)
    return rep, out


def _gate(scenario, names):
    rep, out = _verdicts(scenario)
    labels = {"Gpos_i": "Hyp:Gpos(i)", "Gpos_ii": "Hyp:Gpos(ii)", "Gposuni": "Hyp:Gposuni",
              "lipmu0": "hyp:lipmu0", "lipmu0_initial": "hyp:lipmu0"}
    details = {
        "Gpos_i": "degree vanishes on a set of positive measure",
        "Gpos_ii": f"∫ degree⁻¹ = {rep.inv_degree_integral}",
        "Gposuni": f"sup_u degree(u)⁻¹ = {rep.g_inf_inverse} (min degree {rep.min_degree})",
        "lipmu0": f"blockwise Lipschitz estimate {rep.lipschitz_estimate}",
        "lipmu0_initial": "initial law family has no finite W2-Lipschitz constant",
    }
    for name in names:
        if not out["verdicts"][name]:
            raise AssumptionFailure(labels[name], details[name])
    return out


def _rate(scenario):
    return RateModel(scenario.model.dim_state, scenario.initial.moment_exponent)


def _mn(rate, n):
    return m_n(rate, n, allow_boundary=True)


def _notes(scenario, rate):
    notes = []
    if rate.boundary:
        notes.append(f"2+ε = {2 + rate.moment_exponent:g} is an excluded value of the M_N "
                     "formula in this dimension; m_n column evaluates the formula regardless")
    for role in ("drift", "diffusion"):
        c = getattr(scenario.model, role)
        if getattr(c, "kind", "") == "moment_functional" and "m2" in c.needs:
            notes.append(f"{role} depends on the second moment and is only locally Lipschitz; "
                         f"initial (2+ε)-moment bound {scenario.initial.moment_bound():.6g}")
    return notes


def solve_flow(scenario, store=None):
    store = store if store is not None else BrownianStore(scenario.seed)
    return picard_solve(scenario.graphon, scenario.model, scenario.initial, scenario.grid_size,
                        scenario.ensemble, scenario.config, tol=scenario.tol,
                        max_iter=scenario.max_iter, store=store,
                        antithetic=scenario.antithetic)


# ---------------------------------------------------------------- coupled runs


class _EnvCache:
    """Limit environments keyed by particle count, with one summary cache per row set."""

    def __init__(self, flow):
        self.flow = flow
        self._by_n = {}

    def get(self, n):
        if n not in self._by_n:
            self._by_n[n] = LimitEnvironment.from_flow(self.flow, np.arange(1, n + 1) / n)
        return self._by_n[n]


def _select_labels(n, k):
    """Up to ``k`` evenly spaced particle indices (0-based)."""
    if n <= k:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, k)).astype(np.int64))


def _time_points(n_steps, k):
    return np.unique(np.round(np.linspace(0, n_steps, max(2, min(k, n_steps + 1)))).astype(int))


def _w2sq(pts_a, w_a, pts_b, w_b, subsample, jackknife=False):
    """Squared W2 between weighted clouds; exact in 1-D, subsampled otherwise.

    Returns ``(value, jackknife_error)`` where the error compares full- and
    half-size systematic subsamples (zero in 1-D).
    """
    if pts_a.shape[1] == 1:
        xa, xb = pts_a[:, 0], pts_b[:, 0]
        oa, ob = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
        wa, wb = w_a[oa] / w_a.sum(), w_b[ob] / w_b.sum()
        return max(_quantile_cost(xa[oa], wa, xb[ob], wb), 0.0), 0.0
    mu, nu = DiscreteMeasure(pts_a, w_a / w_a.sum()), DiscreteMeasure(pts_b, w_b / w_b.sum())

    def at(size):
        a = mu if len(mu) <= size else systematic_resample(mu, size)
        b = nu if len(nu) <= size else systematic_resample(nu, size)
        return w2_exact(a, b)[0] ** 2

    full = at(subsample)
    if not jackknife:
        return full, 0.0
    return full, abs(full - at(max(1, subsample // 2)))


def _coupled_replica(scenario, flow, env, n, store, replica, secondary):
    """Per-particle ``sup_t |X^{i,N}_t - X^{u_i}_t|²`` and the secondary integral."""
    model, config = scenario.model, scenario.config
    dt = config.step_size
    state = build_system(scenario.graphon, n, scenario.initial, store, replica)
    x0_lim, keys = limit_start(flow, n, store, replica)
    xf = state.positions[:, None, :]
    xl = x0_lim
    sup = np.sum((xf - xl)[:, 0] ** 2, axis=1)
    family = state.family()
    sec_vals = []
    sec_times = []

    def secondary_at(step, fam):
        lab = secondary["labels"]
        flow_atoms = flow.paths[step][:, : scenario.secondary_members]
        m_rows = env.rows[env.row_index[lab]] / flow_atoms.shape[1]
        vals = []
        jk = []
        for pos, i in enumerate(lab):
            w_f = fam.rows[fam.row_index[i]]
            keep = w_f > 0
            pts_f = fam.atoms[keep, 0]
            row = m_rows[pos]
            sel = row > 0
            pts_l = flow_atoms[sel].reshape(-1, flow_atoms.shape[2])
            w_l = np.repeat(row[sel], flow_atoms.shape[1])
            v, e = _w2sq(pts_f, w_f[keep], pts_l, w_l, scenario.subsample, jackknife=True)
            vals.append(v)
            jk.append(e)
        sec_vals.append((np.mean(vals), np.mean(jk)))
        sec_times.append(step)

    if secondary is not None and 0 in secondary["steps"]:
        secondary_at(0, family)
    for s in range(config.n_steps):
        dw = store.increments(keys, s, model.dim_noise, dt)[:, None, :]
        xf = _advance(xf, model, model.summarize(family), dw, dt)
        xl = _advance(xl, model, env.summary(s), dw, dt)
        family = family.with_atoms(xf)
        sup = np.maximum(sup, np.sum((xf - xl)[:, 0] ** 2, axis=1))
        if secondary is not None and (s + 1) in secondary["steps"]:
            secondary_at(s + 1, family)
    sec = None
    if secondary is not None:
        t = np.asarray(sec_times) * dt
        v = np.array([a for a, _ in sec_vals])
        e = np.array([b for _, b in sec_vals])
        sec = (float(trapezoid(v, t)) if len(t) > 1 else 0.0,
               float(trapezoid(e, t)) if len(t) > 1 else 0.0)
    return sup, sec


def _coupled_errors(scenario, flow, n, store, envs, secondary, threads):
    env = envs.get(n)
    sec_plan = None
    if secondary:
        sec_plan = {"labels": _select_labels(n, scenario.secondary_labels),
                    "steps": set(_time_points(scenario.config.n_steps,
                                              scenario.secondary_times).tolist())}

    def one(r):
        return _coupled_replica(scenario, flow, env, n, store, r, sec_plan)

    out = run_replicas(one, scenario.config.replicas, threads)
    sups = np.stack([o[0] for o in out])  # (R, N)
    secs = [o[1] for o in out] if secondary else None
    return sups, secs


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def _base_report(scenario, kind, verdicts, flow, t_flow, rate):
    rep = ExperimentReport(scenario.name, kind)
    rep.verdicts = verdicts
    rep.seeds = {"master_seed": scenario.seed, "replicas": scenario.config.replicas}
    rep.rate = rate.describe()
    rep.flow = flow.manifest()
    rep.wallclock["flow"] = t_flow
    rep.notes = _notes(scenario, rate)
    return rep


def _n_list(scenario, n_list):
    ns = list(scenario.n_list if n_list is None else n_list)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_list must be strictly increasing")
    return ns


def _prepare(scenario, n_list, replicas, seed):
    scenario = scenario.with_overrides(seed=seed, replicas=replicas)
    return scenario, _n_list(scenario, n_list)


def lln_experiment(scenario, n_list=None, replicas=None, seed=None, threads=1, secondary=True):
    """Averaged coupled error ``(1/N) Σ_i E sup_t |X^{i,N} - X^{u_i}|²`` per N.

    Also reports the time integral of ``W2²(ν^{i,N}_s, [Gμ_s]^{u_i})`` averaged
    over up to ``secondary_labels`` particles (``lln_secondary``) and its
    subsampling jackknife error.
    """
    scenario, ns = _prepare(scenario, n_list, replicas, seed)
    verdicts = _gate(scenario, ["Gpos_i", "Gpos_ii"])
    store = BrownianStore(scenario.seed)
    rate = _rate(scenario)
    t0 = time.perf_counter()
    flow = solve_flow(scenario, store)
    rep = _base_report(scenario, "lln", verdicts, flow, time.perf_counter() - t0, rate)
    envs = _EnvCache(flow)
    for n in ns:
        t0 = time.perf_counter()
        sups, secs = _coupled_errors(scenario, flow, n, store, envs, secondary, threads)
        mn = _mn(rate, n)
        rep.add(n, "lln_error", *_mean_se(sups.mean(axis=1)), mn)
        if secondary:
            rep.add(n, "lln_secondary", *_mean_se([s[0] for s in secs]), mn)
            rep.add(n, "lln_secondary_jackknife", *_mean_se([s[1] for s in secs]), mn)
        rep.wallclock[str(n)] = time.perf_counter() - t0
    rep.fit("lln_error")
    return rep


def _sup_stat(sups):
    """``sup_i E[...]`` and the standard error at the maximising particle."""
    means = sups.mean(axis=0)
    i = int(np.argmax(means))
    se = float(sups[:, i].std(ddof=1) / math.sqrt(sups.shape[0])) if sups.shape[0] > 1 else 0.0
    return float(means[i]), se


def poc_experiment(scenario, n_list=None, replicas=None, seed=None, threads=1, keep_sup=False):
    """Sup-over-particles coupled error ``sup_i E sup_t |X^{i,N} - X^{u_i}|²`` against ``M_N``.

    With ``keep_sup`` the per-replica, per-particle sups ``(R, N)`` are kept in
    ``report.sup_samples`` keyed by N.
    """
    scenario, ns = _prepare(scenario, n_list, replicas, seed)
    verdicts = _gate(scenario, ["Gposuni", "lipmu0", "lipmu0_initial"])
    store = BrownianStore(scenario.seed)
    rate = _rate(scenario)
    t0 = time.perf_counter()
    flow = solve_flow(scenario, store)
    rep = _base_report(scenario, "poc", verdicts, flow, time.perf_counter() - t0, rate)
    envs = _EnvCache(flow)
    for n in ns:
        t0 = time.perf_counter()
        sups, _ = _coupled_errors(scenario, flow, n, store, envs, False, threads)
        if keep_sup:
            rep.sup_samples[n] = sups
        mn = _mn(rate, n)
        rep.add(n, "poc_error", *_sup_stat(sups), mn)
        rep.add(n, "lln_error", *_mean_se(sups.mean(axis=1)), mn)
        rep.wallclock[str(n)] = time.perf_counter() - t0
    rep.fit("poc_error")
    rep.fit("lln_error")
    return rep


def _surrogate(scenario, flow, env, n, store):
    """``surrogate_members`` independent terminal draws from ``μ^{u_j}_T`` for every label."""
    K = scenario.surrogate_members
    index = np.arange(1, n + 1)
    x0 = scenario.initial.sample(store, index, n, members=K, stream="surrogate-init")
    ii, kk = np.meshgrid(index, np.arange(K), indexing="ij")
    keys = store.keys(ii.ravel(), n, 0, kk.ravel(), stream="surrogate-brownian")
    return run_labels(env, x0, keys, scenario.model, scenario.config, store, record=False)


def emp_measure_experiment(scenario, n_list=None, replicas=None, seed=None, threads=1):
    """``E W2²([G_N δ̂_T]^{u_i}, [G_N μ̂_T]^{u_i})`` and its ratio to ``M_N / sqrt(deg_i)``.

    ``δ̂`` holds one independent limit path per label ``j/N``; ``μ̂`` is
    replaced by ``surrogate_members`` further independent draws per label.
    """
    scenario, ns = _prepare(scenario, n_list, replicas, seed)
    verdicts = _gate(scenario, ["Gposuni", "lipmu0", "lipmu0_initial"])
    store = BrownianStore(scenario.seed)
    rate = _rate(scenario)
    t0 = time.perf_counter()
    flow = solve_flow(scenario, store)
    rep = _base_report(scenario, "empmeasure", verdicts, flow, time.perf_counter() - t0, rate)
    envs = _EnvCache(flow)
    model = scenario.model
    for n in ns:
        t0 = time.perf_counter()
        env = envs.get(n)
        sur = _surrogate(scenario, flow, env, n, store)  # (N, K, d)
        K = sur.shape[1]
        state = build_system(scenario.graphon, n, scenario.initial, store)
        weights, row_index = state._weights, state.row_index
        degree = state.degrees / n
        labels = _select_labels(n, scenario.secondary_labels)
        mn = _mn(rate, n)

        def one(r):
            x0, keys = limit_start(flow, n, store, r)
            xT = run_labels(env, x0, keys, model, scenario.config, store, record=False)[:, 0]
            vals, ratios = [], []
            for i in labels:
                w = weights[row_index[i]]
                keep = w > 0
                v, _ = _w2sq(xT[keep], w[keep], sur[keep].reshape(-1, sur.shape[2]),
                             np.repeat(w[keep], K), scenario.subsample)
                vals.append(v)
                ratios.append(v * math.sqrt(degree[i]) / mn)
            return float(np.mean(vals)), float(np.mean(ratios))

        out = run_replicas(one, scenario.config.replicas, threads)
        # ratio column: mean of W2² sqrt(deg_i) / M_N over the sampled labels
        rep.add(n, "emp_measure_error", *_mean_se([o[0] for o in out]), mn,
                ratio=float(np.mean([o[1] for o in out])))
        rep.wallclock[str(n)] = time.perf_counter() - t0
    rep.fit("emp_measure_error")
    return rep
