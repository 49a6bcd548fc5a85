import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrbtr.coeff import (AffineDiffusion, BoxParameterSpace, MultiscaleField, constant_field, project_to_box,
                         sample_field, thermal_block_diffusion, thermal_block_space)


def test_projection_examples():
    space = thermal_block_space()
    mu = space.midpoint
    assert np.array_equal(project_to_box(space, mu), mu)
    mu = mu.copy()
    mu[0] = 5.0
    mu[24] = 0.0
    p = project_to_box(space, mu)
    assert p[0] == 4.0 and p[24] == 1.0
    assert np.array_equal(project_to_box(space, p), p)
    with pytest.raises(ValueError):
        project_to_box(space, np.ones(31))


def test_box_layout():
    space = thermal_block_space()
    assert space.dim == 32
    # middle blocks (2,2),(3,2),(2,3),(3,3) of each field, 1-based xi = 4(j-1)+i
    middle = [4 * (j - 1) + i for j in (2, 3) for i in (2, 3)]
    middle = middle + [m + 16 for m in middle]
    assert np.flatnonzero(space.upper == 1.2).tolist() == [m - 1 for m in middle]
    assert np.all(space.lower == 1.0)
    with pytest.raises(ValueError):
        BoxParameterSpace([2.0], [1.0])


def test_sample_field():
    a = sample_field(10, seed=3)
    b = sample_field(10, seed=3)
    assert np.array_equal(a.values, b.values)
    assert np.all((a.values >= 0.9) & (a.values <= 1.1))
    assert np.all(sample_field(1, (1, 1), seed=5).values == 1.0)
    with pytest.raises(ValueError):
        sample_field(3, (1.1, 0.9))


def test_constant_fields_give_twice_mu():
    d = AffineDiffusion((constant_field(), constant_field()))
    x = np.random.default_rng(0).uniform(size=(50, 2))
    assert np.allclose(d.evaluate(np.full(32, 2.5), x), 5.0)


def test_lower_bound_value():
    d = thermal_block_diffusion(24, 48)
    space = thermal_block_space()
    x = np.random.default_rng(0).uniform(size=(500, 2))
    assert np.all(d.evaluate(space.lower, x) >= 1.8)


def test_single_block_support():
    d = thermal_block_diffusion(8, 16)
    comp = d.components(np.array([0.1, 0.2]))
    assert np.flatnonzero(comp).tolist() == [0, 16]
    with pytest.raises(ValueError):
        d.components(np.array([1.2, 0.5]))


def test_csv_round_trip(tmp_path):
    f = sample_field(6, seed=9)
    f.to_csv(tmp_path / 'a.csv')
    g = MultiscaleField.from_csv(tmp_path / 'a.csv')
    assert np.array_equal(f.values, g.values)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-3, 3), st.floats(-3, 3))
def test_affinity(seed, a, b):
    rng = np.random.default_rng(seed)
    d = thermal_block_diffusion(4, 8, seed=seed % 100)
    space = thermal_block_space()
    mu, nu = space.sample(rng), space.sample(rng)
    x = rng.uniform(size=(20, 2))
    assert np.allclose(d.evaluate(a * mu + b * nu, x), a * d.evaluate(mu, x) + b * d.evaluate(nu, x))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_coercivity_bound(seed):
    rng = np.random.default_rng(seed)
    d = thermal_block_diffusion(4, 12, seed=seed % 100)
    mu = thermal_block_space().sample(rng)
    # exact minimum over the piecewise constant field on a resolving grid
    xi, vals = d.cell_data(12)
    A = np.sum(mu[xi] * vals, axis=0)
    lb = d.coercivity_lower_bound(mu)
    assert 0 < lb <= A.min() + 1e-14
    assert d.continuity_upper_bound(mu) >= A.max() - 1e-14
