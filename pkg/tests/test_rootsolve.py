from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gevreylab import construct, doublewell, rootsolve
from gevreylab.params import ParameterSet

PS = ParameterSet(2, 3, 5)


@pytest.fixture(scope="module")
def energy():
    return rootsolve.build_energy(PS, 1.0, h_hi=0.125, per_decade=20)


@pytest.fixture(scope="module")
def curve(energy):
    return rootsolve.solve_curve(PS, 1.0, np.geomspace(1e-4, 0.125, 40), energy)


def test_energy_branch_zero_and_coverage(energy):
    assert float(energy(0.0)) == 0.0
    assert energy.ratio(0.0) == pytest.approx(PS.e_star)
    with pytest.raises(rootsolve.CoverageError):
        energy(2 * energy.hi)
    # interpolant reproduces table nodes
    t = energy.table
    assert np.allclose(energy(t.hbar), t.energy, rtol=1e-13)


def test_energy_branch_needs_rows():
    with pytest.raises(ValueError):
        rootsolve.EnergyBranch(doublewell.branch(PS, 0, [0.01, 0.02, 0.03]))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5).flatmap(lambda r: st.tuples(st.just(r), st.integers(r + 1, 7)))
       .flatmap(lambda rp: st.tuples(st.just(rp[0]), st.just(rp[1]), st.integers(rp[1] + 1, 9))),
       st.floats(0.5, 20.0))
def test_f_vanishes_at_z_tilde(triple, lam):
    ps = ParameterSet(*triple)
    zero = lambda hb: np.zeros_like(np.asarray(hb, dtype=float))
    assert abs(rootsolve.f_eval(0.0, ps.z_tilde(lam), ps, lam, zero)) < 1e-13 * lam


def test_f_at_h0_reference(energy):
    # f(0, z) = z^{-4} - 1/4 for (2,3,5), lambda = 1
    assert rootsolve.f_eval(0.0, 1.0, PS, 1.0, energy) == pytest.approx(0.75, abs=1e-15)
    assert rootsolve.f_eval(0.0, 2.0, PS, 1.0, energy) == pytest.approx(-0.1875, abs=1e-15)


def test_f_domain_errors(energy):
    with pytest.raises(rootsolve.AnsatzError):
        rootsolve.f_eval(1.0, 2.0, PS, 1.0, energy)
    with pytest.raises(ValueError):
        rootsolve.f_eval(0.01, -1.0, PS, 1.0, energy)


def test_f_decreasing_near_root(energy):
    zt = PS.z_tilde(1.0)
    for h in (1e-4, 1e-3, 1e-2):
        for z in np.linspace(zt - 0.1, zt + 0.1, 9):
            assert rootsolve.df_dz_fd(h, z, PS, 1.0, energy) < 0


def test_curve_invariants(curve):
    zt = math.sqrt(2)
    assert np.all((curve.z2 >= zt / 2) & (curve.z2 <= 1.5 * zt))
    assert curve.residual.max() <= 1e-10
    assert abs(curve.z2[0] - zt) <= 1e-3
    assert np.all(curve.ansatz_margin() > 0)
    ratio = curve.h[1] / curve.h[0]
    assert np.max(np.abs(np.diff(curve.z2))) <= 5 * (ratio - 1) * zt


def test_uniqueness_witness(energy, curve):
    rng = np.random.default_rng(1)
    hs = rng.choice(curve.h, 10, replace=False)
    assert rootsolve.uniqueness_witness(PS, 1.0, energy, hs) == [1] * 10


def test_table_halving_stability(curve):
    fine = rootsolve.build_energy(PS, 1.0, h_hi=0.125, per_decade=40)
    z_fine = rootsolve.bisect_roots(curve.h, PS, 1.0, fine)
    assert np.max(np.abs(z_fine - curve.z2)) <= 1e-8


def test_two_parameterisations_agree(curve):
    rho = np.geomspace(300.0, 1e8, 12)
    z_rho = curve.z_of_rho(rho)
    z_h = curve.z_of_h(rho ** -0.375)
    assert np.max(np.abs(z_rho - z_h)) <= 1e-10
    # and against the rows of the stored curve
    r_nodes = curve.h[::5] ** (-1 / 0.375)
    assert np.allclose(curve.z_of_rho(r_nodes), curve.z2[::5], atol=1e-10)
    assert curve.z_of_h(0.0)[0] == curve.z_tilde


def test_bracket_failure_beyond_h0(energy, curve):
    with pytest.raises(rootsolve.CoverageError):
        curve.z_of_h(2 * curve.h0)
    zero = lambda hb: np.zeros_like(np.asarray(hb, dtype=float))
    # with E = 0 the secular root moves out of the bracket once h is large enough
    assert not rootsolve.bracket_valid(0.5, PS, 1.0, zero)[0]
    with pytest.raises(rootsolve.BracketError):
        rootsolve.bisect_roots([0.5], PS, 1.0, zero)


def test_choose_Mu_reference():
    c = construct.build(PS, 0, 0, h_max=0.125, per_decade=10)
    assert c.curve.h0 == pytest.approx(0.125)
    # rho0 = 0.125^{-8/3} = 256 beats (3 sqrt2 / 2)^4 = 20.25
    assert (1.5 * math.sqrt(2)) ** 4 == pytest.approx(20.25)
    assert c.Mu == pytest.approx(256.0, rel=1e-12)
    # sanity: 1 - z(M_u)^2 M_u^{2(theta-1)} > 0
    z = c.curve.z_of_rho(c.Mu)[0]
    assert 1 - z**2 * c.Mu ** (2 * (0.75 - 1)) > 0


def test_choose_Mu_monotone(curve):
    import dataclasses

    prev = math.inf
    for h0 in (0.01, 0.05, 0.1, 0.125):
        c = dataclasses.replace(curve, h0=h0)
        m = rootsolve.choose_Mu(PS, c)
        assert m <= prev
        assert m >= h0 ** (-1 / 0.375) and m >= 20.25 - 1e-9
        prev = m


def test_find_h0_is_largest_valid(energy):
    h = np.geomspace(1e-4, 1.0, 30)
    h0 = rootsolve.find_h0(PS, 1.0, energy, h)
    assert h0 in h and rootsolve.bracket_valid(h0, PS, 1.0, energy)[0]
