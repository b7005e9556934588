"""Numerical toolkit for linear delay equations with diffusive or Levy noise:
characteristic roots, fundamental solutions, variation-of-constants
solutions, Euler-Maruyama simulation and stationarity diagnostics."""

from .measures import Segment, SignedMeasure, integrate_against, segment_eval, segment_sup_norm, total_variation
from .spectrum import (BudgetExceeded, Box, CharSpec, ContourNearZero, RootReport, char_neutral,
                       char_retarded, count_roots_in_box, dissipativity_margin, rightmost_roots,
                       stability_interval_check)
from .fundsol import (AllZeroTail, DecayFit, FundamentalSolution, NeutralRecoveryFailure, fit_decay,
                      fundamental_neutral, fundamental_retarded)
from .voc import (MissingDerivative, VocContext, stochastic_convolution, voc_deterministic,
                  voc_neutral_deterministic)
from .noise import JumpLaw, NoiseSpec, replica_stream, sample_levy_increment
from .simulate import (DiffusionFunctional, ModelSpec, PathGrid, euler_levy_multiplicative,
                       euler_levy_ou, euler_neutral, euler_retarded, simulate_ensemble)
from .stationarity import (ContractionReport, EmpiricalLaw, coupling_contraction,
                           empirical_marginal_law, segment_moment_bound,
                           stationarity_convergence_test, wasserstein1)
from .config import ConfigError, RunConfig, parse_config
from .experiments import run_named_experiment

__version__ = "0.1.0"
