import numpy as np
import pytest

from lrbtr.lrbm import LocalReducedBasis, ReducedModel
from lrbtr.optimizer import (Decision, TrustRegionConfig, TrustRegionState, _rom_foc_step, check_sufficient_decrease,
                             init_state, outer_step, projected_bfgs, run_bfgs_fom, run_tr, solve_subproblem)
from conftest import small_fom


def test_config_defaults_and_relaxation():
    cfg = TrustRegionConfig()
    assert cfg.tau_foc == 3e-6 and cfg.tau_sub == 1.5e-6
    eps = [cfg.relaxation(k) for k in range(20)]
    assert all(b <= a for a, b in zip(eps, eps[1:]))
    assert eps[10] > 0 and all(e == 0 for e in eps[11:])
    with pytest.raises(ValueError):
        TrustRegionConfig(shrink=1.5)
    with pytest.raises(ValueError):
        TrustRegionConfig(tau_foc=0.0)


def test_quadratic_subproblem_reaches_projection(rng):
    fom = small_fom(sigma_d=0.0, sigma=0.3)
    mu_d = fom.spec.mu_d.copy()
    mu_d[:3] = [0.0, 9.0, 2.0]
    fom.spec.mu_d = mu_d
    rm = ReducedModel(fom)
    sub = solve_subproblem(rm, fom.space.sample(rng), 0.1, TrustRegionConfig())
    assert sub.inner_iterations <= 3
    assert np.allclose(sub.mu, fom.space.project(mu_d), atol=1e-10)


def test_unconstrained_subproblem_equals_plain_bfgs(fom, rng):
    basis = LocalReducedBasis(fom.mesh, fom.product)
    for j in range(fom.mesh.num_subdomains):
        basis.extend(j, np.eye(fom.mesh.local_size))
    rm = ReducedModel(fom, basis=basis)
    cfg = TrustRegionConfig()
    mu0 = fom.space.sample(rng)
    sub = solve_subproblem(rm, mu0, np.inf, cfg)

    def value(mu):
        s = fom.solve(mu)
        return s.value, s

    res = projected_bfgs(value, lambda mu, s: s.gradient, fom.space, mu0, cfg.tau_sub, cfg.max_inner, cfg)
    assert sub.inner_iterations == res.iterations
    assert np.allclose(sub.mu, res.mu, rtol=0, atol=1e-8)


def test_stationary_start_returns_immediately():
    fom = small_fom(sigma_d=0.0, sigma=1.0)
    rm = ReducedModel(fom)
    sub = solve_subproblem(rm, fom.spec.mu_d, 0.1, TrustRegionConfig())
    assert sub.inner_iterations == 0
    assert np.array_equal(sub.mu, fom.spec.mu_d)


def test_sufficient_decrease_logic():
    assert check_sufficient_decrease(1.0, 0.0, 1.5, 0.0) is Decision.ACCEPT
    assert check_sufficient_decrease(2.0, 0.1, 1.5, 0.1) is Decision.REJECT
    assert check_sufficient_decrease(1.55, 0.1, 1.5, 0.0) is Decision.NEEDS_FOM


def test_terminates_at_optimum_with_two_fom_solves():
    fom = small_fom(sigma_d=0.0, sigma=1e-2)
    report = run_tr(fom, TrustRegionConfig(), fom.spec.mu_d)
    assert report.converged
    assert report.counters['outer'] == 0
    assert fom.counters.primal == 1 and fom.counters.dual == 1


def test_rom_foc_failure_costs_no_fom_solves(fom, rng):
    cfg = TrustRegionConfig()
    state = init_state(fom, fom.space.sample(rng), cfg)
    before = fom.counters.total
    outer_step(state, cfg)
    h = state.history[-1]
    if h['rom_foc'] > cfg.tau_foc or np.isnan(h['rom_foc']):
        assert fom.counters.total == before


def test_rom_foc_holds_fom_foc_fails_enriches(fom, rng):
    cfg = TrustRegionConfig()
    rm = ReducedModel(fom)
    mu = fom.space.sample(rng)
    # pretend the surrogate is stationary at a point where the full model is not
    state = TrustRegionState(0, mu, rm, cfg.delta0, 1.0, np.zeros(32), [mu])
    n = rm.dim
    rom_foc, fom_foc, added = _rom_foc_step(state, cfg)
    assert rom_foc == 0.0 and fom_foc > cfg.tau_foc
    assert not state.converged
    assert 0 < added <= 2 * fom.mesh.num_subdomains and rm.dim == n + added
    assert fom.counters.primal == 1 and fom.counters.dual == 1


def test_bfgs_quadratic_and_counters(rng):
    fom = small_fom(sigma_d=0.0, sigma=0.3)
    rep = run_bfgs_fom(fom, TrustRegionConfig(), fom.space.sample(rng))
    assert rep.converged and rep.foc < 3e-6
    assert np.allclose(rep.mu, fom.spec.mu_d, atol=1e-5)
    c = rep.counters
    assert c['fom'] == 2 * c['gradients'] + c['rejected_trials']
    assert c['fom_dual'] == c['gradients']
    assert len(rep.history) == c['outer'] + 1


@pytest.fixture(scope='module')
def tr_run():
    fom = small_fom(sigma_d=1000.0, sigma=1e-4, seed=3)
    mu0 = fom.space.sample(np.random.default_rng(7))
    cfg = TrustRegionConfig()
    rep = run_tr(fom, cfg, mu0)
    return fom, cfg, rep


def test_tr_converges_and_is_sound(tr_run):
    fom, cfg, rep = tr_run
    assert rep.converged
    fresh = small_fom(sigma_d=1000.0, sigma=1e-4, seed=3)
    sol = fresh.solve(rep.mu)
    assert fresh.foc(rep.mu, sol.gradient) <= cfg.tau_foc
    c = rep.counters
    # FOM solves come in primal/dual pairs, one pair per full-order check
    assert c['fom_primal'] == c['fom_dual'] and c['fom'] == 2 * c['fom_primal']
    assert len(rep.decay(fom.spec.mu_d)) == c['outer'] + 1


def test_tr_discipline(tr_run):
    fom, cfg, rep = tr_run
    delta = cfg.delta0
    accepted = [rep.history[0]['value']]
    for h in rep.history[1:]:
        assert h['delta'] == delta
        if h['accepted']:
            assert h['ratio'] <= h['delta'] + h['eps']
            assert h['value'] <= accepted[-1] + h['eps'] + 1e-12
            accepted.append(h['value'])
        else:
            delta *= cfg.shrink
    for mu in rep.iterates:
        assert fom.space.contains(mu)


def test_counters_monotone(tr_run):
    _, _, rep = tr_run
    for key in ('fom', 'reduced', 'local', 'outer', 'inner'):
        seq = [h[key] for h in rep.history]
        assert all(b >= a for a, b in zip(seq, seq[1:]))


def test_inner_iterates_feasible(fom, rng):
    seen = []
    cfg = TrustRegionConfig()

    def value(mu):
        seen.append(mu)
        return fom.value(mu), None

    def gradient(mu, _):
        return fom.solve(mu).gradient

    projected_bfgs(value, gradient, fom.space, fom.space.upper + 1.0, cfg.tau_foc, 20, cfg)
    assert all(fom.space.contains(mu) for mu in seen)


def test_budget_exhaustion_reports_unconverged(fom, rng):
    cfg = TrustRegionConfig(max_outer=1)
    rep = run_tr(fom, cfg, fom.space.sample(rng))
    assert rep.counters['outer'] <= 1
    assert rep.converged == (rep.foc <= cfg.tau_foc)


def test_rejection_shrinks_radius(fom, rng):
    cfg = TrustRegionConfig(delta0=1e-14, eps0=1e-14)
    state = init_state(fom, fom.space.sample(rng), cfg)
    mu = state.mu
    n = state.rm.dim
    outer_step(state, cfg)
    h = state.history[-1]
    assert h['decision'] == 'reject' and not h['accepted']
    assert state.delta == cfg.delta0 * cfg.shrink
    assert np.array_equal(state.mu, mu)
    # the model is improved at the current iterate before retrying
    assert state.rm.dim > n
