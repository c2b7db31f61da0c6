"""Spectral Galerkin simulation and large-deviation tools for stochastic Amari neural fields."""

from .action import (ActionValue, DiscretePath, action_eval, action_gradient, action_three_terms,
                     minimize_action)
from .errors import (BlowUpError, CensoringError, ConfigError, ConvergenceError, NfldpError,
                     NumericalError)
from .gains import GainFunction, gain_deriv, gain_eval
from .kernels import KernelSpec, kernel_galerkin_matrix
from .model import (ModelSpec, StationaryState, build_model, drift, drift_jacobian, energy_eval,
                    homogeneous_bistable_model, nemytskii_coeffs, scalar_model, scalar_reduction,
                    stationary_solve)
from .noise import NoiseConfig, OUState, covariance_diagnostic, ou_step, ou_truncation_error, \
    wiener_increments
from .quasipotential import kramers_scalar, multiscale_truncate, quasipotential
from .simulate import (ExitExperiment, SimConfig, Trajectory, em_step, exit_scaling, first_exit,
                       galerkin_convergence, simulate)
from .spectral import (QuadratureGrid, SpectralBasis, basis_eval, build_basis, build_quadrature,
                       noise_spectrum_exponential, project, reconstruct)
