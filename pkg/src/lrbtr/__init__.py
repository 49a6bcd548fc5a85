"""Trust-region PDE-constrained optimization with localized reduced basis surrogates."""
from .coeff import BoxParameterSpace, thermal_block_diffusion, thermal_block_space
from .fom import FullOrderModel
from .grid import build_mesh
from .lrbm import ReducedModel
from .optimizer import TrustRegionConfig, run_bfgs_fom, run_tr

__all__ = ['BoxParameterSpace', 'FullOrderModel', 'ReducedModel', 'TrustRegionConfig', 'build_mesh',
           'run_bfgs_fom', 'run_tr', 'thermal_block_diffusion', 'thermal_block_space']
