from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh

from gevreylab import spectral
from gevreylab.spectral import EVEN, ODD, Potential, SpectralGrid

HARM = Potential.from_terms({2: 1.0})


def test_harmonic_levels():
    pairs = spectral.solve(HARM, 1.0, spectral.auto_grid(HARM, 1.0, 5, n=4001), 5, extrapolate=True)
    assert np.allclose([p.energy for p in pairs], [1, 3, 5, 7, 9], atol=1e-8)


def test_harmonic_semiclassical_scaling():
    mu = 0.01
    pairs = spectral.solve(HARM, mu, spectral.auto_grid(HARM, mu, 1, n=4001), 1, extrapolate=True)
    assert pairs[0].energy == pytest.approx(mu, abs=1e-8)


def test_parity_alternates():
    pairs = spectral.solve(HARM, 1.0, spectral.auto_grid(HARM, 1.0, 4, n=2001), 4)
    assert [p.parity for p in pairs] == [EVEN, ODD, EVEN, ODD]
    for p in pairs:
        assert spectral.parity_of(p.v) == p.parity


def test_sector_split_matches_dense_full_line():
    # independent route: dense symmetric eigensolve of the unsplit full-line matrix
    pot = Potential.from_terms({8: 1.0, 4: -1.0}, offset=0.25)
    mu = 0.2
    grid = SpectralGrid(2.5, 801)
    x, dx = grid.x, grid.dx
    n = x.size
    A = np.diag(2 * mu**2 / dx**2 + pot(x)) - np.diag(np.full(n - 1, mu**2 / dx**2), 1) \
        - np.diag(np.full(n - 1, mu**2 / dx**2), -1)
    dense = eigh(A, eigvals_only=True, subset_by_index=(0, 5))
    ours = [p.grid_energy for p in spectral.solve(pot, mu, grid, 6, check=False)]
    assert np.allclose(ours, dense, rtol=1e-11, atol=1e-12)


def test_double_well_near_degenerate_pair():
    pot = Potential.from_terms({8: 1.0, 4: -1.0}, offset=0.25)
    mu, e_star = 0.05, math.sqrt(16 / math.sqrt(2) / 2)
    grid = spectral.auto_grid(pot, mu, 2, dx=math.sqrt(mu) / 50)
    e0, e1 = spectral.solve(pot, mu, grid, 2)
    assert e0.parity == EVEN and e1.parity == ODD
    assert e1.grid_energy > e0.grid_energy
    assert e1.grid_energy - e0.grid_energy < 1e-3 * e0.grid_energy
    assert e0.energy / mu == pytest.approx(e_star, rel=0.15)
    # cross-check against 4x grid density
    fine = spectral.auto_grid(pot, mu, 2, dx=math.sqrt(mu) / 200)
    f0 = spectral.solve(pot, mu, fine, 1)[0]
    assert abs(f0.energy - e0.energy) < 1e-4 * e0.energy


def test_eigen_residual_orthogonality_energy_identity():
    pot = Potential.from_terms({4: 1.0, 2: -0.5}, offset=1.0)
    pairs = spectral.solve(pot, 0.3, spectral.auto_grid(pot, 0.3, 6, n=3001), 6)
    for i, a in enumerate(pairs):
        assert spectral.eigen_residual(pot, a) <= 1e-8 * (abs(a.grid_energy) + 1)
        assert spectral.energy_identity(pot, a) == pytest.approx(a.grid_energy, abs=1e-8)
        assert a.norm() == pytest.approx(1.0, abs=1e-10)
        for b in pairs[i + 1:]:
            assert abs(spectral.inner(a, b)) <= 1e-8


def test_richardson_observed_order_two():
    grids = [SpectralGrid(8.0, n) for n in (1001, 2001, 4001)]
    e = [spectral.solve(HARM, 1.0, g, 1)[0].grid_energy - 1.0 for g in grids]
    order = math.log2(e[0] / e[1])
    assert order == pytest.approx(2.0, abs=0.05)
    assert abs(e[2]) < abs(e[1]) < abs(e[0])


def test_grid_too_small_raises():
    with pytest.raises(spectral.GridTooSmallError):
        spectral.solve(HARM, 1.0, SpectralGrid(2.0, 401), 5)


@pytest.mark.parametrize("terms", [{}, {3: 1.0}, {2: -1.0}])
def test_potential_validation(terms):
    with pytest.raises(ValueError):
        Potential.from_terms(terms)


def test_solve_rejects_bad_arguments():
    with pytest.raises(ValueError):
        spectral.solve(HARM, 0.0)
    with pytest.raises(ValueError):
        spectral.solve(HARM, 1.0, m=0)


def test_parity_of_rejects_zero_and_mixed():
    with pytest.raises(spectral.AmbiguousParityError):
        spectral.parity_of(np.zeros(5))
    with pytest.raises(spectral.AmbiguousParityError):
        spectral.parity_of(np.array([0.0, 1.0, 3.0]))


def test_apriori_zero_function_rejected():
    x = np.linspace(-1, 1, 101)
    with pytest.raises(ValueError, match="degenerate"):
        spectral.apriori_ratio(HARM, 1.0, x, np.zeros_like(x), np.zeros_like(x))


def test_apriori_bounded_across_mu():
    pot = Potential.from_terms({8: 1.0, 4: -1.0}, offset=0.25)
    ratios = [spectral.verify_apriori(pot, mu, 30, seed=3).max_ratio for mu in (1.0, 0.1, 0.01)]
    assert all(np.isfinite(ratios))
    assert max(ratios[1:]) <= 1.1 * max(ratios[0], ratios[1])


def test_apriori_on_eigenfunction_uses_eigenvalue():
    # for an eigenpair ||Q v|| = E ||v||, so the ratio is finite and bounded
    mu = 0.1
    p = spectral.solve(HARM, mu, spectral.auto_grid(HARM, mu, 1, n=4001), 1)[0]
    d2 = spectral.centered_derivative(p.v, p.grid.dx, 2)
    ratio = spectral.apriori_ratio(HARM, mu, p.x, p.v, d2)
    assert 0 < ratio < 10


def test_gaussian_test_function_second_derivative():
    x = np.linspace(-3, 3, 6001)
    v, d2v = spectral.gaussian_test_function(0.3, 0.7, [1.0, -0.5, 0.2], x)
    fd = np.gradient(np.gradient(v, x), x)
    assert np.max(np.abs(fd[10:-10] - d2v[10:-10])) < 1e-4


def test_derivative_scaling_harmonic_gaussian():
    mus = np.geomspace(1e-3, 1e-1, 5)
    pairs = [spectral.solve(HARM, m, spectral.auto_grid(HARM, m, 1, dx=math.sqrt(m) / 40), 1)[0]
             for m in mus]
    rep = spectral.verify_derivative_scaling(pairs)
    # exact Gaussian (pi mu)^{-1/4} e^{-x^2/(2 mu)}: sup |v^(j)| ~ mu^{-(2j+1)/4}
    assert np.allclose(rep.betas, [0.25, 0.75, 1.25], atol=0.02)
    assert np.all(rep.betas <= rep.bounds + 0.15)
    for p in pairs:
        assert np.max(np.abs(p.v)) >= (2 * p.grid.half_width) ** -0.5


def test_derivative_scaling_needs_four_samples():
    pairs = [spectral.solve(HARM, m, None, 1)[0] for m in (0.1, 0.5, 1.0)]
    with pytest.raises(spectral.InsufficientGridError):
        spectral.verify_derivative_scaling(pairs)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.integers(1, 4))
def test_harmonic_scaling_property(mu, m):
    pairs = spectral.solve(HARM, mu, spectral.auto_grid(HARM, mu, m, dx=math.sqrt(mu) / 30), m,
                           extrapolate=True)
    for k, p in enumerate(pairs):
        assert p.energy == pytest.approx(mu * (2 * k + 1), rel=1e-6)
        assert spectral.eigen_residual(HARM, p) <= 1e-8 * (abs(p.grid_energy) + 1)
