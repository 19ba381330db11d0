from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gammaincc, gammaln

from gevreylab import construct
from gevreylab.params import ParameterSet


# --- anharmonic factor -----------------------------------------------------

def test_anharmonic_harmonic_case():
    g = construct.anharmonic(2, 0)
    assert g.lam == pytest.approx(1.0, abs=1e-9)
    assert g.value_at_0 == pytest.approx(math.pi ** -0.25, rel=1e-7)
    e = construct.anharmonic(2, 1)
    assert e.lam == pytest.approx(3.0, abs=1e-9) and e.eps == 1
    # first Hermite function: u'(0) = sqrt(2) pi^{-1/4}
    assert e.value_at_0 == pytest.approx(math.sqrt(2) * math.pi ** -0.25, rel=1e-6)


def test_anharmonic_quartic_reference():
    # ground and first excited levels of -d^2 + y^4
    assert construct.anharmonic(3, 0).lam == pytest.approx(1.0603620904, abs=1e-8)
    assert construct.anharmonic(3, 1).lam == pytest.approx(3.7996730298, abs=1e-8)


# --- unit moments ----------------------------------------------------------

def test_gamma_identity_small_k():
    lm, _ = construct.log_moment(2, 0.75)
    assert math.exp(lm) == pytest.approx(8.0, rel=1e-12)


def test_unit_moments_match_gamma():
    mt = construct.unit_moments(0.75, range(0, 201))
    exact = np.array([construct.gamma_moment(k, 0.75) for k in mt.k])
    assert np.max(np.abs(mt.log_M - exact)) <= 1e-8
    assert mt.convexity_violations() == 0


@pytest.mark.parametrize("lower", [20.25, 256.0])
def test_lower_limit_incomplete_gamma_oracle(lower):
    theta = 0.75
    ks = np.arange(0, 201, 10)
    mt = construct.unit_moments(theta, ks, lower=lower)
    a = (ks + 1) / theta
    exact = gammaln(a) + np.log(gammaincc(a, lower**theta)) - math.log(theta)
    assert np.max(np.abs(mt.log_M - exact)) <= 1e-8


def test_lower_limit_effect_is_not_negligible_at_k50():
    # the truncated tail at M_u = 256 still removes a visible fraction at k = 50
    lo, _ = construct.log_moment(50, 0.75, lower=256.0)
    full, _ = construct.log_moment(50, 0.75)
    assert full - lo > 1e-3
    # and vanishes for large k
    lo, _ = construct.log_moment(200, 0.75, lower=256.0)
    full, _ = construct.log_moment(200, 0.75)
    assert full - lo < 1e-12


def test_refinement_stability():
    for k in (0, 57, 200):
        a, _ = construct.log_moment(k, 0.75, 28.0, tol=1e-12)
        b, _ = construct.log_moment(k, 0.75, 28.0, tol=1e-14)
        assert abs(a - b) <= 1e-8


def test_fit_reference_orders():
    f = construct.fit_gevrey(construct.unit_moments(0.75, range(50, 201)))
    assert f.s == pytest.approx(4 / 3, rel=0.01)
    f1 = construct.fit_gevrey(construct.unit_moments(1.0, range(50, 201)))
    assert f1.s == pytest.approx(1.0, rel=0.01)


def test_fit_errors():
    mt = construct.unit_moments(0.75, range(0, 201))
    with pytest.raises(construct.FitError):
        construct.fit_gevrey(mt, 50, 70)
    with pytest.raises(construct.FitError):
        construct.fit_gevrey(mt, 300, 400)


@settings(max_examples=15, deadline=None)
@given(st.fractions(min_value=0.5, max_value=1, max_denominator=12))
def test_fit_recovers_inverse_theta(theta):
    f = construct.fit_gevrey(construct.unit_moments(float(theta), range(50, 201, 3)))
    assert f.s == pytest.approx(1 / float(theta), rel=0.01)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 1.0), st.floats(0.0, 500.0), st.integers(0, 1))
def test_unit_log_convexity(theta, lower, eps):
    mt = construct.unit_moments(theta, range(0, 60, 2), lower=lower, eps=eps, r=2)
    assert mt.convexity_violations() == 0


# --- full construction -----------------------------------------------------

def _quad_reference(c, k):
    """Independent log-moment: adaptive quad in rho with the peak factored out."""
    theta = float(c.ps.theta)
    shift = c.power_shift
    logf = lambda rho: (-rho**theta + (k + shift) * math.log(rho) + float(c.log_amplitude(rho)[0]))
    peak_rho = max(c.Mu, ((k + 1) / theta) ** (1 / theta))
    top = logf(peak_rho)
    g = lambda rho: math.exp(logf(rho) - top)
    hi = peak_rho * 4
    while logf(hi) - top > -80:
        hi *= 2
    edges = np.geomspace(c.Mu, hi, 25)
    val = sum(quad(g, a, b, epsabs=0, epsrel=1e-12, limit=200)[0] for a, b in zip(edges, edges[1:]))
    return top + math.log(val)


def test_full_moments_match_quad(c235):
    mt = c235.moments(120)
    for k in (0, 40, 120):
        assert mt.log_M[k] == pytest.approx(_quad_reference(c235, k), abs=1e-7)


def test_full_fit_and_convexity(c235):
    mt = c235.moments(200)
    assert mt.convexity_violations() == 0
    f = construct.fit_gevrey(mt, 50, 200)
    assert abs(f.s / (4 / 3) - 1) <= 0.03
    assert f.s >= 4 / 3 - 0.03 and math.isfinite(f.log_C)


def test_amplitude_positive_and_decay(c235):
    theta = 0.75
    rho = np.geomspace(c235.Mu, 10 * (200 / theta) ** (1 / theta), 50)
    assert c235.positivity(rho)
    beta, c1 = c235.amplitude_decay()
    assert c1 > 0 and abs(beta - 0.375) < 0.05


def test_chain_matches_closed_form(c235):
    rho = np.array([1e3, 1e5])
    h, t, z, hbar = c235.chain(rho)
    assert np.allclose(h, rho ** -0.375, rtol=1e-13)
    assert np.allclose(hbar, h / z**2.5, rtol=1e-13)
    assert np.all(c235.tau(rho) <= 1)


def test_variants_shift_and_factor():
    ps = ParameterSet(2, 3, 5)
    odd = construct.build(ps, 0, 1, per_decade=10)
    assert odd.derivative and odd.power_shift == pytest.approx(1 / 5)
    rho = np.array([500.0, 5e4])
    h, t, z, hbar = odd.chain(rho)
    expected = (odd.log_u2_origin(hbar) + math.log(odd.mode1.value_at_0)
                + np.log(t ** 0.25 / z ** 0.5))
    assert np.allclose(odd.log_amplitude(rho), expected)
    ex = construct.build(ps, 1, 0, per_decade=10)
    assert ex.eps == 1 and ex.power_shift == pytest.approx(0.5)
    assert ex.lam == pytest.approx(3.0, abs=1e-8)


# --- certification ---------------------------------------------------------

def test_residual_chain(c235):
    rng = np.random.default_rng(7)
    samples = construct.random_samples(rng, 20, rho=1e4)
    base = construct.residual_chain(c235, samples)
    assert base.max_normalized <= 1e-6
    pert = construct.residual_chain(c235, samples, z_perturbation=0.01)
    assert pert.max_normalized >= 1e3 * base.max_normalized


def test_residual_chain_out_of_grid(c235):
    with pytest.raises(construct.OutOfGridError):
        construct.residual_chain(c235, [(1e3, 1e4)])


def test_spot_check_origin_term_balance(c235):
    rep = construct.spot_check_pde(c235, [[0.0, 0.0, 0.0, 0.0]])
    assert rep.max_relative <= 1e-3
    d1, d2, *rest = rep.terms[0]
    assert d1 > 0 and d2 > 0 and d1 == pytest.approx(d2, rel=1e-3)
    assert all(t == 0 for t in rest)


def test_spot_check_theta_sensitivity(c235):
    pts = [[0.004, -0.003, 0.006, 0.002]]
    good = construct.spot_check_pde(c235, pts)
    bad = construct.spot_check_pde(c235, pts, theta_scale=0.9)
    assert good.max_relative <= 1e-3
    assert bad.max_relative >= 1e2 * good.max_relative


def test_spot_check_rejects_bad_shape(c235):
    with pytest.raises(ValueError):
        construct.spot_check_pde(c235, [[0.0, 0.0]])
