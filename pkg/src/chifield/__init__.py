"""Tail probabilities for maxima of chi-square random fields on lattices,
with an application to genome-wide two-locus interaction scans."""

__version__ = "0.1.0"

from .errors import (
    ChiFieldError,
    ConfigurationError,
    ConvergenceError,
    DegenerateTableError,
    NumericalError,
    UnsupportedConfiguration,
)
from .field_model import CovarianceSpec, Lattice, bar_rho, load_config, sphere_expectation_mc, sphere_moment_prod
from .special_fn import NuMethod, Phi, nu, nu_approx, nu_series, phi
from .tail_approx import (
    TailEstimate,
    TailQuery,
    clamp,
    continuous_tail,
    renewal_tail,
    tail_curve,
    tail_probability,
    tube_tail,
)
from .mc_sim import EmpiricalTail, SimPlan, empirical_tail, simulate_field, simulate_maxima
