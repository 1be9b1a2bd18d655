"""Numerical laboratory for self-similar Gaussian processes: exact
covariance engines, weighted Riemann sums, odd power variations, limit
constants and reproducible Monte Carlo verification experiments."""

__version__ = "0.1.0"

from .covariance_engine import (GridSpec, IncrementCovariance, LowerFactor,
                                NotPositiveSemidefiniteError, PathSample,
                                build_increment_covariance, cholesky_factor,
                                inequality_audit, rng_stream, sample_path)
from .hermite import (OddPowerCoeffs, hermite_eval, joint_odd_moment,
                      odd_power_coeffs)
from .montecarlo import (ExperimentConfig, ExperimentReport, ks_statistic,
                         run_convergence_experiment, run_ito_experiment,
                         run_variation_experiment, sample_limit_Z, write_report)
from .process_models import (Family, ParameterError, PhiDomainError,
                             ProcessModel, catalog_models, covariance,
                             hypothesis_audit, make_model, parse_model_spec,
                             phi, psi)
from .quadrature import (QuadratureConstants, SymmetricMeasure, constants_of,
                         ell_of, kappa, make_measure, midpoint, milne, moment,
                         parse_measure_spec, simpson, trapezoid)
from .statistics import (LimitConstants, SmoothFunction, corrector,
                         exact_variance_Vn, ito_residual, limit_constants,
                         limit_variance_Z, power_variation, rho_alpha,
                         riemann_sum, sigma_ell_series, smooth_function,
                         taylor_remainder)

__all__ = [name for name in dir() if not name.startswith("_")]
