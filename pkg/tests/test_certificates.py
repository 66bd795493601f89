import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulsym.certificates import (ComparisonFunction, case_tag, check_dwell, derive_asf,
                                   derive_reverse_asf, dwell_margins, flow_mismatch_bound,
                                   gap_coefficient, linear_system_certificate, optimize_precision,
                                   to_max_form, verify_certificate)
from impulsym.dynamics import storage_delivery
from impulsym.errors import CaseExcluded, DwellViolated, FreeParamInfeasible
from impulsym.geometry import Box

TAU, ETA = 0.2, 0.01


def cert_for(a, b, c=10.0, d=10.0):
    return linear_system_certificate(a, b, c, d)


# -- comparison functions ----------------------------------------------------


def test_comparison_function_algebra():
    f = ComparisonFunction(2.0, 3.0)
    r = np.array([0.0, 0.5, 2.0])
    assert np.allclose(f.inverse()(f(r)), r)
    assert np.allclose(f.scaled(3.0)(r), 3 * f(r))
    assert np.allclose(f.precomposed(0.5)(r), f(0.5 * r))
    g = ComparisonFunction(0.5, 2.0)
    assert np.allclose(f.compose(g)(r), f(g(r)))
    assert ComparisonFunction.zero()(5.0) == 0.0
    with pytest.raises(ValueError):
        ComparisonFunction.zero().inverse()
    with pytest.raises(ValueError):
        ComparisonFunction(1.0, 0.0)


# -- certificate verification -------------------------------------------------


def storage(a=-0.2, b=0.9, c=10.0, d=10.0, p1=1, p2=5):
    return storage_delivery(a, b, c, d, tau=TAU, p1=p1, p2=p2, region=Box((25.0,), (50.0,)))


@pytest.mark.parametrize("a,b,c", [(-0.2, 0.9, 10.0), (-0.3, 1.01, 15.0), (0.2, 0.85, 15.0)])
def test_storage_certificate_passes(a, b, c):
    rep = verify_certificate(storage(a, b, c, c), cert_for(a, b, c, c), samples=5000)
    assert rep.passed, rep.max_violation


def test_certificate_finite_difference_path_agrees():
    rep = verify_certificate(storage(), cert_for(-0.2, 0.9), samples=2000, use_gradient=False)
    assert rep.passed, rep.max_violation


def test_halved_kappa_d_is_caught():
    cert = replace(cert_for(-0.2, 0.9), kappa_d=0.45)
    rep = verify_certificate(storage(), cert, samples=2000)
    assert "jump" in rep.failed_conditions()
    # hand-picked witness: x = 1, xh = 0, u = uh = 0
    assert cert.V(np.array([0.9]), np.array([0.0])) > cert.kappa_d * 1.0


def test_diagonal_pairs_have_zero_certificate_value():
    cert = cert_for(-0.2, 0.9)
    x = np.linspace(25, 50, 11)[:, None]
    assert np.all(cert.V(x, x) == 0.0)


# -- dwell condition and inter-impulse bound ---------------------------------


def test_dwell_examples():
    m = dwell_margins(-0.2, 0.85, TAU, 1, 2)
    assert m == pytest.approx((math.log(0.85) + 0.04, math.log(0.85) + 0.08))
    assert m == pytest.approx((-0.1225189295, -0.0825189295), abs=1e-9)
    assert check_dwell(cert_for(0.2, 0.85), TAU, 1, 2)
    assert not check_dwell(cert_for(0.0, 1.0), TAU, 1, 5)
    m2 = dwell_margins(0.3, 1.01, TAU, 5, 7)
    assert m2[0] == pytest.approx(math.log(1.01) - 0.3, abs=1e-12)
    assert check_dwell(cert_for(-0.3, 1.01), TAU, 5, 7)


def test_flow_mismatch_bound_examples():
    cert = cert_for(-0.2, 0.9)
    want = math.exp(-0.04) + (1 - math.exp(-0.04)) / 0.2 * 10.0
    assert flow_mismatch_bound(cert, 1.0, 0.2, 1.0) == pytest.approx(want, abs=1e-12)
    assert flow_mismatch_bound(cert, 1.0, 0.2, 1.0) == pytest.approx(2.921317482, abs=1e-9)
    assert flow_mismatch_bound(cert, 1.0, 0.2, 0.0) == pytest.approx(math.exp(-0.04))


def test_flow_mismatch_bound_continuous_at_zero_rate():
    limit = flow_mismatch_bound(cert_for(0.0, 0.9), 1.0, 0.2, 1.0)
    assert limit == pytest.approx(1.0 + 0.2 * 10.0)
    for kc in (1e-8, -1e-8):
        assert flow_mismatch_bound(cert_for(-kc, 0.9), 1.0, 0.2, 1.0) == pytest.approx(limit, abs=1e-6)
    assert gap_coefficient(0.0, 0.3) == 0.3


# -- parameter derivation -------------------------------------------------------


def test_case_tags():
    assert case_tag(0.2, 0.9) == "DD"
    assert case_tag(0.3, 1.01) == "FD"
    assert case_tag(-0.2, 0.85) == "DF"
    with pytest.raises(CaseExcluded):
        case_tag(0.0, 1.0)
    with pytest.raises(CaseExcluded):
        derive_asf(cert_for(0.1, 1.2), TAU, 1, 5, ETA)


def test_case1_parameters():
    asf = derive_asf(cert_for(-0.2, 0.9), TAU, 1, 5, ETA)
    assert asf.case_tag == "DD"
    assert asf.sigma_tilde == pytest.approx(max(math.exp(-0.04), 0.9), abs=1e-15)
    assert asf.sigma_tilde == pytest.approx(0.960789439152323, abs=1e-12)
    assert asf.eps_tilde == pytest.approx(0.01)
    assert asf.rho_u_tilde.is_zero
    assert asf.alpha_tilde == ComparisonFunction.identity()


def test_case3_parameters_at_fixed_delta():
    asf = derive_asf(cert_for(0.2, 0.85, 15, 15), TAU, 1, 2, ETA, delta_free=2.5)
    want = max(math.exp(0.04) * 0.85 ** (1 / 2.5), 0.85 ** ((2.5 - 2) / 2.5))
    assert asf.sigma_tilde == pytest.approx(want, abs=1e-15)
    assert asf.sigma_tilde == pytest.approx(0.9753025272, abs=1e-9)
    # alpha_tilde is the inverse of alpha_lo^{-1}(kappa_d^{-p2/delta} s)
    assert asf.alpha_tilde(1.0) == pytest.approx(0.85 ** (2 / 2.5))


def test_case2_parameters_at_fixed_epsilon():
    eps = 0.5
    asf = derive_asf(cert_for(-0.3, 1.01, 15, 15), TAU, 5, 7, ETA, epsilon_free=eps)
    lam = max(math.exp(-0.3 * 0.2 * (1 - eps)), math.exp(-0.3 * 0.2 * eps * 5) * 1.01)
    assert asf.lambda_f == pytest.approx(lam, abs=1e-15)
    assert asf.eps_tilde == pytest.approx(math.exp(0.3 * 0.2 * eps * 8) * ETA, abs=1e-15)
    paper = derive_asf(cert_for(-0.3, 1.01, 15, 15), TAU, 5, 7, ETA, epsilon_free=eps,
                       alpha_convention="paper")
    assert paper.alpha_tilde(1.0) == pytest.approx(math.exp(0.3 * 0.2 * eps * 5))
    assert asf.alpha_tilde(1.0) == 1.0


def test_free_parameter_errors():
    cert = cert_for(-0.3, 1.01)
    with pytest.raises(FreeParamInfeasible):
        derive_asf(cert, TAU, 5, 7, ETA)
    with pytest.raises(FreeParamInfeasible):
        derive_asf(cert, TAU, 5, 7, ETA, epsilon_free=0.001)
    with pytest.raises(FreeParamInfeasible):
        derive_asf(cert_for(0.2, 0.85), TAU, 1, 2, ETA, delta_free=2.0)
    with pytest.raises(DwellViolated):
        derive_asf(cert_for(-0.05, 1.2), TAU, 1, 5, ETA, epsilon_free=0.5)


def test_reverse_direction():
    cert = cert_for(-0.2, 0.9)
    asf = derive_asf(cert, TAU, 1, 5, ETA)
    assert derive_reverse_asf(asf, cert, 0.0).eps_tilde == asf.eps_tilde
    rev = derive_reverse_asf(asf, cert, 1.0)
    assert rev.eps_tilde == pytest.approx(0.01 + max((1 - math.exp(-0.04)) / 0.2 * 10, 10.0))
    assert rev.eps_tilde == pytest.approx(10.01)
    assert rev.sigma_tilde == asf.sigma_tilde and rev.direction == "reverse"


# -- max form and precision -------------------------------------------------


def test_max_form_formula():
    asf = replace(derive_asf(cert_for(-0.2, 0.9), TAU, 1, 5, ETA), sigma_tilde=0.5, eps_tilde=1.0)
    mf = to_max_form(asf, 0.5)
    assert mf.sigma == pytest.approx(0.75)
    assert mf.eps == pytest.approx(4.0)
    with pytest.raises(ValueError):
        to_max_form(asf, 1.0)


def test_case1_eps_hat():
    asf = derive_asf(cert_for(-0.2, 0.9), TAU, 1, 5, ETA)
    want = 0.01 / ((1 - max(math.exp(-0.04), 0.9)) * 0.99)
    for r in (0.0, 1.0, 7.0):
        assert to_max_form(asf, 0.99, r).eps_hat == pytest.approx(want, abs=1e-14)
    assert want == pytest.approx(0.25761, abs=1e-5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.001, 0.999), st.floats(1e-4, 10.0))
def test_max_form_dominates_original(psi, sig, et):
    asf = replace(derive_asf(cert_for(-0.2, 0.9), TAU, 1, 5, ETA), sigma_tilde=sig, eps_tilde=et)
    mf = to_max_form(asf, psi)
    assert mf.sigma >= sig - 1e-15
    assert mf.eps >= et * (1 - 1e-15)


def test_eps_hat_monotone_in_eta():
    cert = cert_for(-0.2, 0.9)
    vals = [to_max_form(derive_asf(cert, TAU, 1, 5, eta), 0.99).eps_hat
            for eta in (0.005, 0.01, 0.02, 0.05)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_optimize_precision_case1_prefers_large_psi():
    cert = cert_for(-0.2, 0.9)
    _, mf = optimize_precision(cert, TAU, 1, 5, ETA)
    assert mf.psi == pytest.approx(0.999)
    assert mf.eps_hat <= 0.25761
    _, fixed = optimize_precision(cert, TAU, 1, 5, ETA, psi=0.99)
    assert fixed.eps_hat == pytest.approx(0.257609426711594, abs=1e-12)


def test_optimize_precision_cases_2_and_3():
    asf2, mf2 = optimize_precision(cert_for(-0.3, 1.01, 15, 15), TAU, 5, 7, ETA, psi=0.99)
    assert asf2.case_tag == "FD" and mf2.eps_hat <= 0.75
    asf3, mf3 = optimize_precision(cert_for(0.2, 0.85, 15, 15), TAU, 1, 2, ETA, psi=0.99)
    assert asf3.case_tag == "DF" and mf3.eps_hat <= 0.65
    # the refined optimum beats every lattice point it started from
    for eps in (0.1, 0.2, 0.3):
        a = derive_asf(cert_for(-0.3, 1.01, 15, 15), TAU, 5, 7, ETA, epsilon_free=eps)
        assert mf2.eps_hat <= to_max_form(a, 0.99).eps_hat + 1e-15


def test_optimize_precision_is_deterministic():
    a = optimize_precision(cert_for(0.2, 0.85, 15, 15), TAU, 1, 2, ETA)
    b = optimize_precision(cert_for(0.2, 0.85, 15, 15), TAU, 1, 2, ETA)
    assert a[1].eps_hat == b[1].eps_hat and a[0].delta_free == b[0].delta_free


def test_optimize_precision_rejects_dwell_failure():
    with pytest.raises(DwellViolated):
        optimize_precision(cert_for(-0.05, 1.2), TAU, 1, 5, ETA)
