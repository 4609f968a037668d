import numpy as np
import pytest

from graphonmf.dynamics import (ConstantDiffusion, DynamicsModel, LabelMixture,
                                LinearMeanReversion, MomentFunctional, ReflectionGap,
                                ScalarKernel, Zero, eval_diffusion, eval_drift, lipschitz_probe)
from graphonmf.errors import DimensionMismatch
from graphonmf.transport import DiscreteMeasure


def builtins():
    return {
        "zero": DynamicsModel(Zero(), Zero()),
        "linear": DynamicsModel(LinearMeanReversion(1.0), ConstantDiffusion(0.5)),
        "linear_m2": DynamicsModel(LinearMeanReversion(1.0),
                                   MomentFunctional("sqrt_one_plus_m2", 0.3, "diffusion")),
        "attraction": DynamicsModel(ScalarKernel("attraction"), ConstantDiffusion(0.2)),
        "tanh": DynamicsModel(MomentFunctional("tanh_mean"), ConstantDiffusion(0.1)),
        "reflection": DynamicsModel(ReflectionGap(1.0, 0.25), ConstantDiffusion(0.1)),
        "kernel_2d": DynamicsModel(ScalarKernel("sine"),
                                   ScalarKernel("sine_modulated", 1.0, "diffusion"), dim_state=2),
    }


def test_drift_examples():
    d0 = DiscreteMeasure.dirac([0.0])
    assert eval_drift(builtins()["zero"], [1.3], d0)[0] == 0.0
    assert eval_drift(DynamicsModel(LinearMeanReversion(1.0), Zero()), [2.0], d0)[0] == -2.0
    mu = DiscreteMeasure([[1.0], [3.0]])
    assert eval_drift(DynamicsModel(ScalarKernel("attraction"), Zero()), [0.0], mu)[0] == 2.0


def test_diffusion_examples():
    mu = DiscreteMeasure([[1.0, 2.0], [0.0, 3.0]])
    np.testing.assert_array_equal(eval_diffusion(DynamicsModel(Zero(), Zero(), 2), [0, 0], mu),
                                  np.zeros((2, 2)))
    m = DynamicsModel(Zero(), ConstantDiffusion(0.7), 2)
    np.testing.assert_array_equal(eval_diffusion(m, [5.0, 1.0], mu), 0.7 * np.eye(2))
    m = DynamicsModel(Zero(), MomentFunctional("sqrt_one_plus_m2", 1.0, "diffusion"), 2)
    np.testing.assert_allclose(eval_diffusion(m, [0, 0], DiscreteMeasure.dirac([0.0, 0.0])),
                               np.eye(2))
    with pytest.raises(DimensionMismatch):
        eval_drift(m, [0.0], mu)


def test_reflection_gap_values():
    m = DynamicsModel(ReflectionGap(1.0, 0.5), Zero())
    sym = DiscreteMeasure([[-1.0], [1.0]])
    assert eval_drift(m, [0.0], sym)[0] == pytest.approx(0.0, abs=1e-15)
    # W2(δ_1, δ_-1) = 2
    assert eval_drift(m, [0.0], DiscreteMeasure.dirac([1.0]))[0] == pytest.approx(1.0)


def test_permutation_and_duplicate_invariance(rng):
    for name, model in builtins().items():
        d = model.dim_state
        pts, w = rng.normal(size=(5, d)), rng.dirichlet(np.ones(5))
        x = rng.normal(size=d)
        base = eval_drift(model, x, DiscreteMeasure(pts, w))
        perm = rng.permutation(5)
        np.testing.assert_allclose(eval_drift(model, x, DiscreteMeasure(pts[perm], w[perm])),
                                   base, atol=1e-12)
        split_pts = np.vstack([pts, pts[:1]])
        split_w = np.concatenate([[w[0] / 2], w[1:], [w[0] / 2]])
        np.testing.assert_allclose(eval_drift(model, x, DiscreteMeasure(split_pts, split_w)),
                                   base, atol=1e-12)
        np.testing.assert_allclose(
            eval_diffusion(model, x, DiscreteMeasure(split_pts, split_w)),
            eval_diffusion(model, x, DiscreteMeasure(pts, w)), atol=1e-12)


def test_probe_bounds():
    assert lipschitz_probe(builtins()["zero"], trials=200) == 0.0
    lin = DynamicsModel(LinearMeanReversion(1.0), Zero())
    assert lipschitz_probe(lin, trials=500) <= 1.0 + 1e-9
    for name, model in builtins().items():
        assert lipschitz_probe(model, trials=300, seed=1) <= model.declared_lipschitz * (1 + 1e-6)


def test_model_validation():
    with pytest.raises(ValueError):
        DynamicsModel(Zero(), Zero(), declared_lipschitz=-1.0)
    with pytest.raises(ValueError):
        DynamicsModel(ScalarKernel("sine_modulated", role="diffusion"),
                      ConstantDiffusion(1.0))
    with pytest.raises(KeyError):
        ScalarKernel("nope")
    m = DynamicsModel(LinearMeanReversion(2.0), ConstantDiffusion(0.5))
    # constant diffusion does not depend on (x, μ)
    assert m.declared_lipschitz == pytest.approx(2.0)
    assert m.base_bound == pytest.approx(0.5)


def test_label_mixture_rows():
    atoms = np.array([[[0.0], [2.0]], [[10.0], [10.0]]])
    fam = LabelMixture(atoms, [[1.0, 0.0], [0.5, 0.5]], [0, 1, 1])
    s = DynamicsModel(LinearMeanReversion(1.0), Zero()).summarize(fam)
    np.testing.assert_allclose(s.per_measure("m1")[:, 0], [1.0, 5.5, 5.5])
    mu = fam.measure(1)
    assert mu.mean()[0] == pytest.approx(5.5)
    rows, inv = LabelMixture.dedupe([[1, 0], [0, 1], [1, 0]])
    assert len(rows) == 2 and inv[0] == inv[2]
