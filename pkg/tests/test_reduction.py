import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fhn_zerohopf import averaging as avg
from fhn_zerohopf.errors import DegenerateFamily, DomainError, FirstOrderNotZero
from fhn_zerohopf.fhn_core import jacobian, vector_field
from fhn_zerohopf.reduction import (OrbitPrediction, PerturbationT1, PerturbationT2, PerturbationT34,
                                    averaged_f_t1, averaged_g_t2, build_reduced_t1, build_reduced_t2,
                                    build_reduced_t34, embed_prediction, predict_orbits_t1, predict_orbits_t2,
                                    predict_orbits_t34, closed_form_r_star_t34, t1_matrix, t1_gamma)

T1_EXAMPLE = dict(d=0.5, omega=0.5, alpha=1.0, beta1=0.0, gamma=1.0)
T2_EXAMPLE = dict(omega=0.5, alpha1=2.0, gamma1=1.0)
T3_CASES = [
    dict(alpha1=1, beta1=1, beta2=-1, gamma2=-2),
    dict(alpha1=1, beta1=1, beta2=1, gamma2=2),
    dict(alpha1=1, beta1=1, beta2=1, gamma2=-10),
    dict(alpha1=-10, beta1=-1, beta2=-10, gamma2=-100),
]


def jordan(P, A):
    return np.linalg.solve(P, A @ P)


@pytest.mark.parametrize("build, fam", [
    (build_reduced_t1, PerturbationT1(**T1_EXAMPLE)),
    (build_reduced_t1, PerturbationT1(d=2.0, omega=0.4, alpha=0.3, beta1=0.2, gamma=-0.5)),
    (build_reduced_t2, PerturbationT2(**T2_EXAMPLE)),
    (build_reduced_t34, PerturbationT34(alpha0=-0.8, **T3_CASES[0])),
    (build_reduced_t34, PerturbationT34(alpha0=-1.5, sign="minus", **T3_CASES[0])),
])
def test_change_of_variables_gives_rotation(build, fam):
    red = build(fam)
    A = jacobian(fam.params(0.0), red.equilibrium(0.0))
    w = red.omega
    assert np.allclose(jordan(red.P, A), [[0, -w, 0], [w, 0, 0], [0, 0, 0]], atol=1e-12)


def test_t1_third_column():
    d, w = 0.5, 0.5
    s = math.sqrt(1 / d - w**2)
    assert np.allclose(t1_matrix(w, d) @ [0, 0, 1], [s / w**2, s / (d * w**2), 0])


def test_reduced_field_has_no_order_zero_term():
    red = build_reduced_t1(PerturbationT1(**T1_EXAMPLE))
    th = np.linspace(0, 2 * np.pi, 7)
    dr, dw = red.series_field(th, 0.7 + 0 * th, -0.3 + 0 * th)
    assert np.allclose(dr.c[0], 0, atol=1e-14) and np.allclose(dw.c[0], 0, atol=1e-14)


def test_series_field_matches_exact_field():
    fam = PerturbationT34(alpha0=-0.8, **T3_CASES[0])
    red = build_reduced_t34(fam)
    th, r, w = 0.9, 1.3, -0.4
    dr, dw = red.series_field(np.array([th]), np.array([r]), np.array([w]))
    err = []
    for eps in (1e-3, 5e-4):
        exact = red.full_field(th, r, w, eps)
        err.append(np.abs(exact - np.array([dr(eps)[0], dw(eps)[0]])).max())
    # the series is truncated after eps^2, so halving eps divides the error by about 8
    assert 6 < err[0] / err[1] < 10


def test_original_coordinates_round_trip():
    red = build_reduced_t34(PerturbationT34(alpha0=-0.8, eps=0.01, **T3_CASES[1]))
    X = red.to_original(0.4, 2.0, -1.5)
    th, r, w = red.from_original(X)
    assert (th, r, w) == pytest.approx((0.4, 2.0, -1.5), abs=1e-12)


def test_t1_closed_form_against_quadrature():
    fam = PerturbationT1(d=0.5, omega=1.0, alpha=1.0, beta1=0.0, gamma=1.0)
    sys = build_reduced_t1(fam).system
    assert avg.average_first(sys, [1.0, 1.0]) == pytest.approx(averaged_f_t1(fam, 1.0, 1.0), abs=1e-8)
    assert avg.average_first(sys, [1.0, 0.0]) == pytest.approx(averaged_f_t1(fam, 1.0, 0.0), abs=1e-8)


def test_t1_closed_form_beta1_discrepancy():
    # the closed f1 holds for c = b d + eps gamma; with c = beta0 d + eps gamma it is
    # short by -beta1 d r0 / (2 omega)
    fam = PerturbationT1(d=0.5, omega=0.5, alpha=1.0, beta1=0.7, gamma=1.0)
    sys = build_reduced_t1(fam).system
    r0, w0 = 1.2, -0.4
    f = avg.average_first(sys, [r0, w0])
    f1, f2 = averaged_f_t1(fam, r0, w0)
    assert f[1] == pytest.approx(f2, abs=1e-8)
    assert f[0] - f1 == pytest.approx(-fam.beta1 * fam.d * r0 / (2 * fam.omega), abs=1e-8)


def test_t1_closed_form_limits():
    fam = PerturbationT1(d=0.5, omega=1.0, alpha=0.0, beta1=0.4, gamma=0.0)
    assert averaged_f_t1(fam, 1.0, 0.0)[0] == 0
    assert averaged_f_t1(PerturbationT1(**T1_EXAMPLE), 1e-12, 0.3)[0] == pytest.approx(0, abs=1e-10)


def test_t2_closed_form_against_quadrature():
    fam = PerturbationT2(omega=0.5, alpha1=1.0, gamma1=1.0)
    sys = build_reduced_t2(fam).system
    assert avg.average_second(sys, [1.0, 1.0]) == pytest.approx(averaged_g_t2(fam, 1.0, 1.0), abs=1e-8)
    fam = PerturbationT2(omega=1.7, alpha1=-0.4, gamma1=0.8, alpha2=0.2, beta2=0.3, gamma2=-0.6)
    sys = build_reduced_t2(fam).system
    assert avg.average_second(sys, [1.0, 0.5]) == pytest.approx(averaged_g_t2(fam, 1.0, 0.5), abs=1e-8)


def test_t2_closed_form_limits():
    fam = PerturbationT2(omega=0.5, alpha1=1.0, gamma1=0.0, gamma2=0.3)
    assert averaged_g_t2(fam, 1.3, 0.7)[1] == 0
    assert averaged_g_t2(PerturbationT2(**T2_EXAMPLE), 0.0, 0.7)[0] == 0


def test_t2_first_order_vanishes():
    sys = build_reduced_t2(PerturbationT2(**T2_EXAMPLE)).system
    pts = np.array([[0.3, 1.0, 2.5], [-1.0, 0.2, 1.9]])
    assert np.abs(avg.average_first(sys, pts)).max() < 1e-12


def test_t1_gamma_boundary_gives_nothing():
    fam = PerturbationT1(d=0.5, omega=1.0, alpha=1.0, beta1=0.0, gamma=1.0)
    assert predict_orbits_t1(fam) == []
    zs = avg.find_averaged_zeros(build_reduced_t1(fam).system, "first", box=[(0.01, 2), (-2, 2)], grid=[5, 5],
                                 positive_mask=[True, False])
    assert zs == []
    assert predict_orbits_t1(PerturbationT1(d=0.5, omega=0.5, alpha=0.0, beta1=0.0, gamma=0.0)) == []


def test_t1_prediction():
    fam = PerturbationT1(eps=0.01, **T1_EXAMPLE)
    (pr,) = predict_orbits_t1(fam)
    assert pr.gamma_aux == pytest.approx(27 / 28, abs=1e-15)
    # f1 = f2 = 0 is solved by sqrt(Gamma/2), not by the uncorrected sqrt(Gamma)
    assert pr.rw_star[0] == pytest.approx(0.25 * math.sqrt(27 / 56), abs=1e-14)
    assert pr.cross_check["r_star"] == pytest.approx(0.25 * math.sqrt(27 / 28), abs=1e-14)
    zs = avg.find_averaged_zeros(build_reduced_t1(fam).system, "first", box=[(0.01, 1), (-1, 1)], grid=[6, 6],
                                 positive_mask=[True, False])
    assert len(zs) == 1
    assert zs[0].z == pytest.approx(pr.rw_star, abs=1e-7)
    assert all(ok for _, _, ok in pr.conditions)


def test_t1_statement_condition_matches_gamma_sign():
    for kw in (T1_EXAMPLE, dict(d=2.0, omega=0.4, alpha=0.3, beta1=0.0, gamma=-0.5),
               dict(d=0.5, omega=1.2, alpha=0.1, beta1=0.0, gamma=2.0)):
        fam = PerturbationT1(**kw)
        beta0, d = fam.beta0, fam.d
        stmt = beta0**2 * d**4 * fam.alpha**2 - (1 - beta0**2 * d**3) ** 2 * fam.gamma**2
        assert (stmt > 0) == (t1_gamma(fam) > 0)


def test_t2_prediction():
    (pr,) = predict_orbits_t2(PerturbationT2(eps=0.01, **T2_EXAMPLE))
    assert pr.rw_star[1] == pytest.approx(1 / 3, abs=1e-14)
    zs = avg.find_averaged_zeros(build_reduced_t2(PerturbationT2(**T2_EXAMPLE)).system, "second",
                                 box=[(0.01, 2), (-1, 1)], grid=[5, 5], positive_mask=[True, False])
    assert len(zs) == 1 and zs[0].z == pytest.approx(pr.rw_star, abs=1e-7)
    (neg,) = predict_orbits_t2(PerturbationT2(omega=0.5, alpha1=-2.0, gamma1=1.0))
    assert neg.rw_star[0] == pytest.approx(pr.rw_star[0], rel=1e-14)
    assert neg.rw_star[1] == pytest.approx(-1 / 3, abs=1e-14)


def test_t2_empty_and_errors():
    assert predict_orbits_t2(PerturbationT2(omega=0.5, alpha1=0.1, gamma1=1.0, gamma2=3.0)) == []
    with pytest.raises(DegenerateFamily):
        predict_orbits_t2(PerturbationT2(omega=1.0, alpha1=1.0, gamma1=1.0))
    with pytest.raises(FirstOrderNotZero):
        predict_orbits_t2(PerturbationT2(omega=0.5, alpha1=1.0, gamma1=1.0, beta1=0.1))


@pytest.mark.parametrize("fam, fn", [
    (PerturbationT1(**T1_EXAMPLE), predict_orbits_t1),
    (PerturbationT1(d=2.0, omega=0.4, alpha=0.3, beta1=0.0, gamma=-0.5), predict_orbits_t1),
    (PerturbationT2(**T2_EXAMPLE), predict_orbits_t2),
    (PerturbationT2(omega=1.7, alpha1=-2.0, gamma1=0.8, beta2=0.3, gamma2=0.6), predict_orbits_t2),
])
def test_closed_form_jacobian_value(fam, fn):
    (pr,) = fn(fam)
    red = build_reduced_t1(fam) if fn is predict_orbits_t1 else build_reduced_t2(fam)
    order = "first" if fn is predict_orbits_t1 else "second"
    J = avg.fd_jacobian(avg.averaged_function(red.system, order), np.array(pr.rw_star))
    assert abs(pr.jac_det_value - np.linalg.det(J)) < 1e-6 * (1 + abs(pr.jac_det_value))


def test_predictions_independent_of_eps_and_embedding_linear():
    preds = [predict_orbits_t1(PerturbationT1(eps=e, **T1_EXAMPLE))[0] for e in (0.02, 0.01)]
    assert preds[0].rw_star == preds[1].rw_star
    a, b = (np.asarray(p.initial_condition) for p in preds)
    assert np.allclose(a, 2 * b, atol=1e-15)


def test_embedding_first_row():
    fam = PerturbationT1(eps=0.01, **T1_EXAMPLE)
    (pr,) = predict_orbits_t1(fam)
    r, w = pr.rw_star
    d, om = fam.d, fam.omega
    x = 0.01 * (-r / om**2 + math.sqrt(1 / d - om**2) * w / om**2)
    assert pr.initial_condition.x == pytest.approx(x, abs=1e-16)
    assert embed_prediction(build_reduced_t1(fam), pr.rw_star) == pr.initial_condition


def test_period_estimate_tends_to_linear_period():
    red = build_reduced_t1(PerturbationT1(**T1_EXAMPLE))
    T = [red.period_estimate(0.17, -0.07, eps) for eps in (1e-2, 1e-3, 1e-4)]
    assert abs(T[2] - 4 * math.pi) < abs(T[1] - 4 * math.pi) < abs(T[0] - 4 * math.pi)
    assert T[2] == pytest.approx(4 * math.pi, rel=1e-3)


def test_prediction_dict_round_trip():
    (pr,) = predict_orbits_t1(PerturbationT1(eps=0.01, **T1_EXAMPLE))
    back = OrbitPrediction.from_dict(pr.as_dict())
    assert back.as_dict() == pr.as_dict()


def test_t34_first_order_does_not_vanish_at_pplus():
    fam = PerturbationT34(alpha0=-0.8, eps=0.002, **T3_CASES[0])
    with pytest.raises(FirstOrderNotZero) as exc:
        predict_orbits_t34(fam)
    assert exc.value.conditions[-1][0] == "first-order average vanishes"


def test_t34_branch_singularity_rejected():
    a0 = -0.8
    fam = PerturbationT34(alpha0=a0, d=4 / (a0 - 1) ** 2, **T3_CASES[0])
    with pytest.raises(DomainError):
        build_reduced_t34(fam)


def test_t34_interval_checked():
    with pytest.raises(DomainError):
        predict_orbits_t34(PerturbationT34(alpha0=-0.2, **T3_CASES[0]))


def test_t34_formal_second_order_matches_closed_form_r_star():
    for kw in T3_CASES[:3]:
        fam = PerturbationT34(alpha0=-0.8, eps=0.002, **kw)
        preds = predict_orbits_t34(fam, require_first_order_zero=False)
        assert preds
        for pr in preds:
            names = {n: ok for n, _, ok in pr.conditions}
            assert names["first-order average vanishes"] is False
            assert names["closed-form r*(w) agrees"] is True
            assert pr.rw_star[0] > 0


@settings(max_examples=15)
@given(a0=st.floats(-0.95, -0.45), a1=st.floats(-3, 3), b1=st.floats(0.3, 3), b2=st.floats(-3, 3),
       g2=st.floats(-3, 3))
def test_closed_form_r_star_is_the_zero_of_g1(a0, a1, b1, b2, g2):
    fam = PerturbationT34(alpha0=a0, alpha1=a1, beta1=b1, beta2=b2, gamma2=g2)
    sys = build_reduced_t34(fam).system
    for w in (-0.7, 1.3):
        r = closed_form_r_star_t34(fam, w)
        if not (np.isfinite(r) and 0.05 < r < 20):
            continue
        g1 = avg.average_second(sys, [r, w])[0]
        scale = np.abs(avg.average_second(sys, [r * 1.1, w])[0]) + 1e-6
        assert abs(g1) <= 1e-7 * max(1.0, scale)


def test_t34_case_counts_under_formal_procedure():
    counts = [len(predict_orbits_t34(PerturbationT34(alpha0=-0.8, eps=0.002, **kw), require_first_order_zero=False))
              for kw in T3_CASES]
    assert counts == [2, 2, 1, 0]
