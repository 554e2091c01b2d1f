import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fhn_zerohopf import averaging as avg
from fhn_zerohopf.errors import FirstOrderNotZero, QuadratureNotConverged

TWO_PI = 2 * math.pi


def scalar(F=None, G=None, DxF=None):
    return avg.PeriodicSystem(1, TWO_PI, F or (lambda t, z: [0.0 * t + 0.0 * z[0]]), G, DxF)


def test_cosine_forcing_averages_out():
    sys = scalar(lambda t, z: [-z[0] + np.cos(t)])
    for z0 in (0.0, 0.3, -1.7):
        assert avg.average_first(sys, [z0])[0] == pytest.approx(-z0, abs=1e-12)


def test_sin_squared_forcing():
    sys = scalar(lambda t, z: [np.sin(t) ** 2 * z[0]])
    assert avg.average_first(sys, [0.8])[0] == pytest.approx(0.4, abs=1e-12)


def test_g_only_second_order():
    sys = scalar(G=lambda t, z: [z[0] ** 2 + 0.0 * t])
    assert avg.average_second(sys, [1.3])[0] == pytest.approx(1.69, abs=1e-12)


def test_state_independent_f_gives_zero_second_order():
    sys = scalar(lambda t, z: [np.cos(t) + 0.0 * z[0]], DxF=lambda t, z: [[0.0 * t]])
    assert avg.average_second(sys, [0.5])[0] == pytest.approx(0.0, abs=1e-14)


def test_second_order_against_double_integral():
    # F = cos(t) z^2, so D F = 2 cos(t) z and int_0^s F = sin(s) z^2; the mean of
    # 2 cos(s) sin(s) z^3 is zero, plus G = sin(t)^2 z gives z/2
    sys = scalar(lambda t, z: [np.cos(t) * z[0] ** 2], lambda t, z: [np.sin(t) ** 2 * z[0]])
    assert avg.average_second(sys, [0.7])[0] == pytest.approx(0.35, abs=1e-10)
    # F = (1 + cos t) z: integrand (1 + cos s)(s + sin s) z, reference by fine trapezoid
    sys = scalar(lambda t, z: [(1 + np.cos(t)) * z[0]])
    s = np.linspace(0, TWO_PI, 200001)
    ref = np.trapezoid((1 + np.cos(s)) * (s + np.sin(s)), s) / TWO_PI
    assert avg.average_second(sys, [2.0])[0] == pytest.approx(2.0 * ref, rel=1e-8)


def test_batch_matches_pointwise():
    sys = avg.PeriodicSystem(2, TWO_PI, lambda t, z: [z[1] * np.cos(t) ** 2, -z[0] + np.sin(t) * z[1]])
    pts = np.array([[0.1, 0.5, 2.0], [1.0, -1.0, 0.3]])
    batch = avg.average_first(sys, pts)
    for k in range(3):
        assert np.allclose(batch[:, k], avg.average_first(sys, pts[:, k]), atol=1e-14)


@given(c1=st.floats(-2, 2), c2=st.floats(-2, 2), z=st.floats(-3, 3))
def test_first_average_is_linear_in_the_field(c1, c2, z):
    F1 = lambda t, x: [np.sin(t) ** 2 * x[0] ** 2]
    F2 = lambda t, x: [np.cos(3 * t) + np.cos(t) ** 4 * x[0]]
    Fc = lambda t, x: [c1 * F1(t, x)[0] + c2 * F2(t, x)[0]]
    lhs = avg.average_first(scalar(Fc), [z])[0]
    rhs = c1 * avg.average_first(scalar(F1), [z])[0] + c2 * avg.average_first(scalar(F2), [z])[0]
    assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(rhs)))


def test_doubling_nodes_changes_little():
    sys = scalar(lambda t, z: [np.exp(np.sin(t)) * z[0]], lambda t, z: [np.cos(t) ** 2 * z[0] ** 3])
    for f in (avg.average_first, avg.average_second):
        a = f(sys, [1.1], nodes=512)[0]
        b = f(sys, [1.1], nodes=1024)[0]
        assert abs(a - b) < avg.TOL_QUAD


def test_quadrature_not_converged():
    sys = scalar(lambda t, z: [np.cos(400 * t) ** 2 * np.exp(np.sin(97 * t)) * z[0]])
    with pytest.raises(QuadratureNotConverged):
        avg.average_first(sys, [1.0], nodes=16, max_nodes=64)


def test_newton_finds_linear_zero():
    sys = scalar(lambda t, z: [-z[0] + np.cos(t)])
    zs = avg.find_averaged_zeros(sys, "first", seeds=[[0.7]])
    assert len(zs) == 1
    assert zs[0].z[0] == pytest.approx(0.0, abs=1e-12)
    assert zs[0].jac[0, 0] == pytest.approx(-1.0, abs=1e-8)
    assert avg.stability_of_zero(zs[0]) == avg.ATTRACTING


def test_zeros_dedup_and_mask():
    # f(r, w) = (r (1 - r^2), -w), zeros at r = -1, 0, 1
    sys = avg.PeriodicSystem(2, TWO_PI, lambda t, z: [z[0] * (1 - z[0] ** 2) * (1 + np.cos(t)), -z[1] + 0 * t])
    zs = avg.find_averaged_zeros(sys, "first", box=[(-2, 2), (-1, 1)], grid=[6, 3])
    assert sorted(round(z.z[0], 8) for z in zs) == [-1, 0, 1]
    zs = avg.find_averaged_zeros(sys, "first", box=[(-2, 2), (-1, 1)], grid=[6, 3], positive_mask=[True, False])
    assert [round(z.z[0], 8) for z in zs] == [1]
    for z in zs:
        assert np.linalg.norm(avg.average_first(sys, z.z)) <= 1e-9


def test_degenerate_zero_dropped():
    # a whole line of zeros: det J = 0 at each of them
    sys = avg.PeriodicSystem(2, TWO_PI, lambda t, z: [z[0] + z[1] + 0 * t, z[0] + z[1] + 0 * t])
    assert avg.find_averaged_zeros(sys, "first", seeds=[[1.0, -1.0]]) == []


def test_second_order_requires_vanishing_first():
    sys = scalar(lambda t, z: [z[0] + np.cos(t)], lambda t, z: [-z[0] + 0 * t])
    with pytest.raises(FirstOrderNotZero):
        avg.find_averaged_zeros(sys, "second", seeds=[[0.5]])


def test_second_order_zero():
    # F averages to zero and the D F term has zero mean, so g = (1 - z^2)/2
    sys = scalar(lambda t, z: [np.cos(t) * z[0] ** 2], lambda t, z: [np.sin(t) ** 2 * (1 - z[0] ** 2)])
    zs = avg.find_averaged_zeros(sys, "second", seeds=[[0.6]], box=[(0.1, 2.0)])
    assert len(zs) == 1 and zs[0].z[0] == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("eigs, label", [
    ([-1, -2], avg.ATTRACTING),
    ([-1, 2], avg.SADDLE),
    ([1, 2j], avg.MARGINAL),
    ([1 + 1j, 1 - 1j], avg.REPELLING),
])
def test_stability_labels(eigs, label):
    assert avg.stability_of_eigenvalues(eigs) == label


def test_eps_sign_flips_stability():
    assert avg.stability_of_eigenvalues([-1, -2], eps_sign=-1) == avg.REPELLING


def test_seed_in_singular_region_is_skipped():
    # the field is undefined beyond z = 5; that seed is dropped, the other still converges
    sys = scalar(lambda t, z: [np.where(z[0] > 5, np.nan, z[0] - 1.0) + 0.0 * t])
    zs = avg.find_averaged_zeros(sys, "first", seeds=[[0.5], [10.0]])
    assert len(zs) == 1 and zs[0].z[0] == pytest.approx(1.0, abs=1e-10)
