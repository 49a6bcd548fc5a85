import numpy as np
import pytest

from lrbtr.coeff import thermal_block_diffusion, thermal_block_space
from lrbtr.fom import FullOrderModel
from lrbtr.grid import build_mesh


def small_fom(n_H=3, s=4, sigma_d=100.0, sigma=1e-2, seed=0):
    """12x12 fine grid, fields 4 and 12, objective at a random desired parameter."""
    mesh = build_mesh(n_H, s)
    fom = FullOrderModel(mesh, thermal_block_diffusion(4, 12, seed=42), thermal_block_space())
    mu_d = fom.space.sample(np.random.default_rng(seed))
    fom.set_objective(sigma_d, sigma, mu_d)
    return fom


@pytest.fixture
def fom():
    return small_fom()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section('acceptance criteria')
        for n, ok, detail in sorted(ACCEPTANCE):
            terminalreporter.write_line(f'{"PASS" if ok else "FAIL"} criterion {n}: {detail}')
