"""Polarization, symmetrization and symmetric Ekeland selection on grids."""

from .errors import (
    BudgetExhausted,
    ClassViolation,
    ConfigError,
    DomainMismatch,
    EmptyAdmissible,
    EmptyClass,
    GridMismatch,
    GrowthParamError,
    InfEstimateDrift,
    NonFinite,
    PolarAssumptionViolated,
    SymEkelandError,
)
from .geometry import DomainSpec, Grid, GridMode, HalfSpace, Shape, grid_compatible_halfspaces
from .rearrange import GridFunction, polarize, symmetrize, symmetry_defect
from .functional import DiscreteFunctional, GrowthParams, Integrand, make_integrand
from .ekeland import (
    EkelandCertificate,
    EkelandParams,
    ekeland_select,
    minimizing_sequence_pipeline,
    symmetric_ekeland_select,
)

__version__ = "0.1.0"
