"""Spectral Galerkin Navier-Stokes on the periodic 3-torus with energy-bound verification."""
from .basis import Basis, Mode, RandomSpectrum, build_basis, evaluate_field, project_initial
from .bounds import (BoundSpec, bound_curves, bound_g, bound_sqrt_g, conditions6_check, convolution_bound,
                     extremal_ode, remark1_bound)
from .config import ScenarioConfig, bundled_scenarios, load_bundled
from .errors import *  # noqa: F401,F403
from .forcing import (CutoffEnvelope, ExponentialEnvelope, ForcingProfile, PolynomialEnvelope, TableEnvelope,
                      ZeroEnvelope, make_weights, unforced)
from .solver import (CoefficientState, EnergyTrace, SolverParams, energy, energy_balance_residual, integrate,
                     rhs)
from .tensor import InteractionTensor, apply_nonlinearity, assemble_tensor, basis_and_tensor

__version__ = "0.1.0"
