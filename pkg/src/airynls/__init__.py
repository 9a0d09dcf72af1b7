"""Spectral simulation and verification lab for the Airy-Schrodinger
equation (third-order dispersion with cubic derivative nonlinearities)."""

__version__ = "0.1.0"

from .spectral import (  # noqa: F401
    Grid,
    SpectralField,
    MultiplierSymbol,
    make_grid,
    snap_wavenumber,
    fractional_derivative,
    first_derivative,
    sobolev_norm,
    m_symbol,
    l_symbol,
    i_operator,
    l_operator,
    power_integral,
    random_field,
    identity_symbol,
)
from .models import (  # noqa: F401
    EquationParams,
    Capabilities,
    GaugeParams,
    SolitonParams,
    validate,
    transformed_params,
    gauge_transform,
    soliton_two_param,
    soliton_one_param,
    plane_wave,
    phase_rotate,
    rescale_data,
    choose_lambda,
)
from .solver import (  # noqa: F401
    StepperConfig,
    Trajectory,
    IntegrationError,
    linear_propagator,
    nonlinear_rhs,
    integrate,
    suggest_dt,
    residual,
)
from .multilinear import (  # noqa: F401
    HyperplaneTuple,
    MultiplierFn,
    LatticeBudgetError,
    constant_multiplier,
    m2_multiplier,
    upsilon_n,
    delta4,
    delta4_values,
    delta4_multiplier,
    delta6,
    delta6_multiplier,
    elongate,
    apply_ame,
    lambda_n,
)
from .energies import (  # noqa: F401
    EnergyReport,
    i1,
    i2,
    e1,
    e2,
    e2_rate,
    increment_ledger,
    trajectory_reports,
)
