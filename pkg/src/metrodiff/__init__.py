"""Metropolized integration of SDEs defined by (D, rho_eq) under detailed balance."""

from .backend import HAVE_COMPILED, active_backend, set_backend
from .errors import (ConfigError, EvalOutsideSupport, ExpressionError,
                     GradientUnavailable, MetrodiffError, MismatchedHorizon,
                     NonIntegerStepCount, NonpositiveDiffusion, NonpositiveDt,
                     NonpositiveEquilibrium, NonpositiveError,
                     QuadratureNonConvergence, SingularSolve, SupportViolation,
                     UnsortedEdges)
from .integrator import (ChainState, EnsembleStats, StepOutcome,
                         acceptance_prob, detailed_balance_log_residual,
                         em_step, ensemble_final_positions, mh_step, propose,
                         proposal_density, simulate_ensemble,
                         simulate_trajectory, steps_for_horizon)
from .models import (DerivedCoefficients, DiffusionModel, builtin_models,
                     constant_model, derive_coefficients, get_model)
from .rng import RngStream, derive_seed

__version__ = "0.1.0"
