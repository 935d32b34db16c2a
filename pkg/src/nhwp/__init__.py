"""Gaussian wave packets under non-Hermitian Hamiltonians H - i Gamma.

Semiclassical equations of motion for the packet center, metric and mass,
an exact split-step grid reference, and Wigner-function diagnostics that
compare the two.
"""
from .errors import *  # noqa: F401,F403
from .phase_space import (GaussianWignerState, b_to_g, check_metric, complex_structure, expectation,
                          g_to_b, metric_inverse, omega, symplectic_residual, variance, wigner_eval)
from .models import (AnharmonicModel, FiniteDifferenceModel, ObservablePair, QuadraticModel,
                     WaveguideModel, eval_all, fd_check, gamma_omega_hess, MODELS)
from .semiclassical import (FixedPoint, IntegratorConfig, SemiclassicalState, TrajectoryRecord,
                            ehrenfest_time, fixed_point, integrate, rhs, stationary_g, z_jacobian)
from .grid import (Grid1D, GridWavefunction, SeparableOperator, coherent_state, grid_moments,
                   propagate, split_step)
from .wigner import MomentSet, WignerGrid, moments, pde_residual, wigner_transform

__version__ = "0.1.0"
