import math

import numpy as np
import pytest

from graphonmf.initial import (BlockConstant, DiracLaw, DiscreteLaw, GaussianFamily, GaussianLaw,
                               Point)
from graphonmf.rng import BrownianStore
from graphonmf.transport import w2_exact


def test_point_family():
    fam = Point(location=(1.0,), slope=(2.0,))
    x = fam.sample(BrownianStore(0), [1, 2, 4], 4)
    np.testing.assert_allclose(x[:, 0, 0], [1.5, 2.0, 3.0])
    assert fam.kappa == 2.0
    assert fam.moment_bound() == pytest.approx(3.0**4)


def test_gaussian_family_draws():
    fam = GaussianFamily(mean=(-1.0,), mean_slope=(2.0,), std=0.5)
    x = fam.sample(BrownianStore(3), [1], 2, members=20000)[0, :, 0]
    assert x.mean() == pytest.approx(0.0, abs=0.02)
    assert x.std() == pytest.approx(0.5, rel=0.02)
    assert fam.kappa == pytest.approx(2.0)
    with pytest.raises(ValueError):
        GaussianFamily(std=0.1, std_slope=-0.5)


def test_gaussian_moment_formula():
    # E|Z|^4 = 3 in one dimension, E|Z|^2 = d
    assert GaussianLaw((0.0,), 1.0).moment(4) == pytest.approx(2**3 * 3)
    assert GaussianLaw((0.0, 0.0, 0.0), 1.0).moment(2) == pytest.approx(2 * 3)


def test_block_constant():
    fam = BlockConstant((0.0, 0.5, 1.0), (DiracLaw((1.0,)), DiscreteLaw(((-2.0,), (2.0,)))))
    x = fam.sample(BrownianStore(0), np.arange(1, 9), 8, members=50)
    assert np.all(x[:4] == 1.0)
    assert set(np.unique(x[4:])) == {-2.0, 2.0}
    assert fam.kappa == 0.0
    assert fam.moment_bound() == pytest.approx(16.0)
    np.testing.assert_array_equal(fam.block_of([0.0, 0.5, 0.5001, 1.0]), [0, 0, 1, 1])
    with pytest.raises(ValueError):
        BlockConstant((0.0, 1.0), (DiracLaw((1.0,)), DiracLaw((2.0,))))
    with pytest.raises(ValueError):
        BlockConstant((0.0, 0.5, 1.0), (DiracLaw((1.0,)), DiracLaw((2.0, 0.0))))


def test_kappa_is_w2_lipschitz():
    fam = GaussianFamily(mean=(0.0, 1.0), mean_slope=(1.0, -1.0), std=1.0, std_slope=0.5)
    a, b = fam.law(0.2), fam.law(0.7)
    # closed-form W2 between isotropic Gaussians
    w2 = math.sqrt(np.sum((np.array(a.mean) - b.mean) ** 2) + 2 * (a.std - b.std) ** 2)
    assert w2 == pytest.approx(fam.kappa * 0.5)


def test_shared_draws_between_resolutions():
    fam = GaussianFamily()
    store = BrownianStore(11)
    np.testing.assert_array_equal(fam.sample(store, [2], 4), fam.sample(store, [1], 2))


def test_discrete_law_measure():
    law = DiscreteLaw(((0.0,), (1.0,)), (0.25, 0.75))
    mu = law.to_measure()
    assert w2_exact(mu, mu)[0] == 0.0
    assert law.moment(2) == pytest.approx(0.75)
