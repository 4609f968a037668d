import json
import math

import numpy as np
import pytest

from graphonmf.errors import AssumptionFailure, BoundaryCase, NonPositiveError
from graphonmf.experiments import (RateModel, _w2sq, emp_measure_experiment, lln_experiment,
                                   m_n, poc_experiment, rate_fit)
from graphonmf.graphon import StochasticBlock
from graphonmf.scenario import load_builtin


def test_m_n_examples():
    assert m_n(RateModel(1, 2.0), 100, allow_boundary=True) == pytest.approx(0.2)
    assert m_n(RateModel(4, 1.0), 1) == pytest.approx(math.log(2) + 1)
    assert m_n(RateModel(6, 1.0), 64) == pytest.approx(0.5)
    with pytest.raises(BoundaryCase):
        m_n(RateModel(1, 2.0), 100)
    with pytest.raises(BoundaryCase):
        m_n(RateModel(3, 2.0), 10)
    with pytest.raises(ValueError):
        m_n(RateModel(2, 1.0), 0)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5, 6])
def test_m_n_case_coverage(d):
    rate = RateModel(d, 0.7)
    assert rate.case == ("low" if d < 4 else "critical" if d == 4 else "high")
    vals = [m_n(rate, n) for n in range(1, 200)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_rate_fit_examples():
    ns = np.array([10, 100, 1000, 10000])
    s, c, r2 = rate_fit(zip(ns, ns**-0.5))
    assert s == pytest.approx(-0.5) and r2 == pytest.approx(1.0)
    assert rate_fit([(10, 2.0), (20, 2.0), (40, 2.0)])[0] == pytest.approx(0.0)
    s, _, _ = rate_fit(zip(ns, 2 * ns**-0.5 + 1.0 / ns))
    assert -0.6 < s < -0.5
    with pytest.raises(NonPositiveError):
        rate_fit([(1, 1.0), (2, 0.0), (3, 1.0)])
    with pytest.raises(ValueError):
        rate_fit([(1, 1.0), (2, 1.0)])


def test_single_sample_vs_ensemble():
    pts = np.array([[1.0], [2.0], [4.0]])
    v, _ = _w2sq(np.array([[0.0]]), np.ones(1), pts, np.ones(3), 256)
    assert v == pytest.approx(np.mean(pts[:, 0] ** 2))
    pts2 = np.array([[1.0, 0.0], [0.0, 2.0]])
    v, _ = _w2sq(np.array([[0.0, 0.0]]), np.ones(1), pts2, np.ones(2), 256)
    assert v == pytest.approx(2.5)


def test_zero_null_statistics_exact():
    sc = load_builtin("zero_null")
    for fn in (lln_experiment, poc_experiment, emp_measure_experiment):
        rep = fn(sc)
        assert rep.entries and all(e["value"] == 0.0 for e in rep.entries)


def test_gating():
    with pytest.raises(AssumptionFailure, match="Hyp:Gposuni"):
        poc_experiment(load_builtin("powerlaw_lln"))
    with pytest.raises(AssumptionFailure, match="Hyp:Gposuni"):
        emp_measure_experiment(load_builtin("powerlaw_lln"))


def test_poc_dominates_lln_and_report(tmp_path):
    sc = load_builtin("constant_linear").with_overrides(n_list=[20, 40, 80], replicas=4)
    rep = poc_experiment(sc)
    for n in (20, 40, 80):
        assert rep.value(n, "poc_error") >= rep.value(n, "lln_error")
    text = rep.to_csv(tmp_path / "r.csv")
    assert text.splitlines()[0] == "N,statistic,value,stderr,m_n,ratio"
    assert (tmp_path / "r.csv").read_text() == text
    rep.to_json(tmp_path / "r.json")
    man = json.loads((tmp_path / "r.json").read_text())
    assert man["seeds"]["master_seed"] == sc.seed and "poc_error" in man["slopes"]
    assert man["verdicts"]["verdicts"]["Gposuni"] is True
    assert any("excluded" in note for note in man["notes"])


def test_lln_decreases_constant_linear():
    sc = load_builtin("constant_linear")
    rep = lln_experiment(sc, secondary=False)
    n, v, se = rep.series("lln_error")
    assert all(b <= a + 2 * sa for a, b, sa in zip(v, v[1:], se))


def test_lln_secondary_rows():
    sc = load_builtin("constant_linear").with_overrides(n_list=[20, 40, 80], replicas=2)
    rep = lln_experiment(sc)
    assert {e["statistic"] for e in rep.entries} == {"lln_error", "lln_secondary",
                                                    "lln_secondary_jackknife"}
    assert all(e["value"] > 0 for e in rep.entries if e["statistic"] == "lln_secondary")


def test_determinism():
    sc = load_builtin("sbm_two_block").with_overrides(n_list=[16, 32, 64], replicas=2,
                                                      grid_size=4, ensemble=64)
    a = lln_experiment(sc, seed=5).to_csv()
    b = lln_experiment(sc, seed=5, threads=2).to_csv()
    assert a == b
    assert lln_experiment(sc, seed=6).to_csv() != a


def test_emp_measure_degree_scaling():
    sc = load_builtin("poc_reflection").with_overrides(replicas=16)
    ns = [64, 256, 1024]
    full = emp_measure_experiment(sc, n_list=ns)
    half = emp_measure_experiment(
        sc.with_overrides(graphon=StochasticBlock([0.0, 0.5, 1.0], [[1.0, 0.0], [0.0, 1.0]])),
        n_list=ns)
    for a, b in zip(full.entries, half.entries):
        se_a = a["stderr"] * a["ratio"] / a["value"]
        se_b = b["stderr"] * b["ratio"] / b["value"]
        assert abs(a["ratio"] - b["ratio"]) <= 2 * math.hypot(se_a, se_b)
    ratios = [e["ratio"] for e in full.entries]
    assert max(ratios) / min(ratios) < 2.0
