import numpy as np
import pytest

from lrbtr.dg import q1_values
from lrbtr.fom import ObjectiveSpec, l2_norm_squared, objective, projected_gradient_norm
from oracles import (central_differences, conforming_on_dg, conforming_q1, manufactured_errors,
                     unit_diffusion_fom)
from conftest import small_fom


def test_matches_conforming_fem():
    dist = []
    for n_H in (2, 4, 8):
        fom = unit_diffusion_fom(n_H, 4, 10.0)
        u = fom.solve_primal(np.ones(32))
        w = conforming_on_dg(fom.mesh, conforming_q1(fom.mesh.n_h, lambda p: 10.0))
        dist.append(np.sqrt(l2_norm_squared(fom.mesh, u - w)) / fom.mesh.h ** 2)
    # distance / h^2 stays bounded and does not grow
    assert dist[2] <= dist[1] <= dist[0] < 1.0


def test_manufactured_convergence():
    e = manufactured_errors(((2, 6), (4, 6), (8, 6)))
    rates = np.log2(np.array(e[:-1]) / e[1:])
    assert np.all(np.abs(rates - 2.0) < 0.2)


def test_zero_source():
    fom = unit_diffusion_fom(2, 2, 0.0)
    assert np.all(fom.solve_primal(np.ones(32)) == 0)


def test_dual_examples(fom, rng):
    # at the desired parameter the primal equals u_d, so the adjoint data vanish
    assert np.allclose(fom.solve_dual(fom.spec.mu_d, fom.spec.u_d), 0.0)
    mu = fom.space.sample(rng)
    u = fom.solve_primal(mu)
    p = fom.solve_dual(mu, u)
    A = fom.assemble(mu)
    Q = rng.standard_normal((fom.dim, 20))
    res = Q.T @ (A @ p) - fom.spec.sigma_d * Q.T @ (fom.mass @ (u - fom.spec.u_d))
    assert np.abs(res).max() <= 1e-10 * np.abs(Q.T @ (A @ p)).max()
    zero = small_fom(sigma_d=0.0)
    assert np.all(zero.solve_dual(mu, zero.solve_primal(mu)) == 0)


def test_objective_examples(fom, rng):
    spec = fom.spec
    assert objective(spec, spec.u_d, spec.mu_d, fom.mass) == 1.0
    s = ObjectiveSpec(0.0, np.r_[3.0, np.zeros(31)], np.zeros(32), spec.u_d)
    mu = np.zeros(32)
    mu[0] = 0.5
    assert objective(s, np.zeros_like(spec.u_d), mu, fom.mass) == pytest.approx(1 + 3.0 * 0.25 / 2)
    with pytest.raises(ValueError):
        ObjectiveSpec(-1.0, np.zeros(32), np.zeros(32), spec.u_d)


def test_misfit_quadratures_agree(fom, rng):
    u = fom.solve_primal(fom.space.sample(rng))
    e = u - fom.spec.u_d
    by_mass = e @ fom.mass @ e
    # cell-by-cell Gauss rule evaluated on point values
    from lrbtr.dg import _cell_quadrature
    pts, w = _cell_quadrature()
    vals = e[fom.mesh.cell_dofs] @ q1_values(pts).T
    by_gauss = fom.mesh.h ** 2 * np.sum(vals ** 2 @ w)
    assert by_mass == pytest.approx(by_gauss, rel=1e-12)
    assert l2_norm_squared(fom.mesh, e) == pytest.approx(by_mass, rel=1e-12)


def test_gradient_finite_differences(fom, rng):
    mu = fom.space.sample(rng)
    g = fom.solve(mu).gradient
    fd = central_differences(fom.value, mu, 1e-5)
    assert np.all(np.abs(g - fd) <= 1e-4 * np.abs(fd) + 1e-9)


def test_gradient_without_misfit(rng):
    fom = small_fom(sigma_d=0.0, sigma=0.3)
    mu = fom.space.sample(rng)
    assert np.array_equal(fom.solve(mu).gradient, 0.3 * (mu - fom.spec.mu_d))


def test_desired_parameter_is_optimal(fom):
    sol = fom.solve(fom.spec.mu_d)
    assert sol.value == pytest.approx(1.0, abs=1e-14)
    assert fom.foc(sol.mu, sol.gradient) <= 3e-6
    assert all(r <= 1e-6 for r in fom.optimality_residuals(sol.mu, sol.u, sol.p))


def test_optimality_residuals_generic(fom, rng):
    mu = fom.space.sample(rng)
    u, p = rng.standard_normal((2, fom.dim))
    assert all(r > 0 for r in fom.optimality_residuals(mu, u, p))


def test_box_stationarity_semantics(fom):
    mu = fom.space.lower.copy()
    g = np.ones(32)
    assert projected_gradient_norm(fom.space, mu, g) == 0.0
    assert np.linalg.norm(g) > 0


def test_factorization_reuse(fom, rng):
    mu = fom.space.sample(rng)
    u = fom.solve_primal(mu)
    lu = fom.factorization(mu)
    fom.solve_dual(mu, u)
    assert fom.factorization(mu) is lu
    assert fom.counters.primal == 1 and fom.counters.dual == 1
