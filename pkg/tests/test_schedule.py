from fractions import Fraction

import numpy as np
import pytest

from ordinal_diffusion.schedule import build_schedule


@pytest.fixture(scope="module")
def sched():
    return build_schedule(1e-4, 0.02, 1000)


def test_endpoints_exact(sched):
    assert sched.beta[1] == 1e-4
    assert sched.beta[1000] == 0.02


def test_first_alpha_bar(sched):
    assert sched.alpha_bar[1] == pytest.approx(0.9999, abs=1e-16)


def test_midpoint_against_exact_rational_recomputation(sched):
    b1, bT = Fraction(1, 10_000), Fraction(2, 100)
    expected = (bT - b1) * 499 / 999 + b1
    assert sched.beta[500] == pytest.approx(float(expected), rel=1e-15)


def test_monotone_and_bounded(sched):
    beta = sched.beta[1:]
    ab = sched.alpha_bar[1:]
    assert np.all(np.diff(beta) >= 0)
    assert np.all((beta > 0) & (beta < 1))
    assert np.all(np.diff(ab) < 0)
    assert np.all((ab > 0) & (ab < 1))


def test_derived_arrays(sched):
    t = np.arange(1, sched.T + 1)
    np.testing.assert_array_equal(sched.alpha[t], 1.0 - sched.beta[t])
    np.testing.assert_array_equal(sched.sigma[t], np.sqrt(sched.beta[t]))
    ratio = sched.alpha_bar[2:] / sched.alpha_bar[1:-1]
    np.testing.assert_allclose(ratio, sched.alpha[2:], rtol=1e-15, atol=0)


def test_running_product_matches_loop(sched):
    acc = 1.0
    for t in range(1, sched.T + 1):
        acc *= 1.0 - sched.beta[t]
        assert sched.alpha_bar[t] == acc


@pytest.mark.parametrize("b1,bT,T", [(0, 0.02, 10), (0.03, 0.02, 10), (1e-4, 1.0, 10),
                                     (1e-4, 0.02, 1), (1e-4, 0.02, 2.5)])
def test_rejects_bad_hyperparameters(b1, bT, T):
    with pytest.raises(ValueError):
        build_schedule(b1, bT, T)


def test_immutable(sched):
    with pytest.raises(ValueError):
        sched.beta[3] = 0.5


def test_timestep_range(sched):
    with pytest.raises(ValueError):
        sched.check_t(0)
    with pytest.raises(ValueError):
        sched.check_t(1001)
    assert sched.check_t(0, allow_zero=True) == 0
