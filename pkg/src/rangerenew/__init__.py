"""Distinct counts of i.i.d. samples from heavy-tailed discrete laws.

Exact and Poissonized moments with certified error bounds, rate functions for
the large and moderate deviations of the count, an exactly reproducible Monte
Carlo engine, and desk-scale checks of the limit theorems.
"""

__version__ = "0.1.0"

from .laws import (DiscreteLaw, LawParameterError, OutOfSupportWarning, RegularProfile,  # noqa: E402
                   make_factorial_gap, make_finite, make_geometric, make_zipf, parse_law, pmf,
                   regular_profile, sample)
from .rng import RngState  # noqa: E402
from .series import CertifiedValue  # noqa: E402
from .moments import (delta_n, exact_mean_Rn, exact_var_Rn, mu, mu_ddot, mu_dot,  # noqa: E402
                      sigma_sq)
from .ratefn import (lambda_gamma_integral, lambda_gamma_series, lambda_one,  # noqa: E402
                     legendre_transform, finite_t_cgf, mdp_rate)
from .montecarlo import (SimBatch, simulate_coupled, simulate_direct,  # noqa: E402
                         simulate_poissonized, summarize)
from .verify import Report, brute_force_Rn  # noqa: E402

__all__ = [
    "__version__", "DiscreteLaw", "LawParameterError", "OutOfSupportWarning", "RegularProfile",
    "make_factorial_gap", "make_finite", "make_geometric", "make_zipf", "parse_law", "pmf",
    "regular_profile", "sample", "RngState", "CertifiedValue", "delta_n", "exact_mean_Rn",
    "exact_var_Rn", "mu", "mu_ddot", "mu_dot", "sigma_sq", "lambda_gamma_integral",
    "lambda_gamma_series", "lambda_one", "legendre_transform", "finite_t_cgf", "mdp_rate",
    "SimBatch", "simulate_coupled", "simulate_direct", "simulate_poissonized", "summarize",
    "Report", "brute_force_Rn",
]
