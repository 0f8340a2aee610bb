"""Blind false-data-injection attacks against DC state estimation, and the tools to study them."""

from .casefile import GridCase, load_case, parse_case
from .dcmodel import DcJacobian, build_jacobian, operating_point
from .errors import (
    CaseParseError,
    CaseValidationError,
    ConfigError,
    ContractError,
    ConvergenceError,
    FdiError,
    ObservabilityError,
    ValidationError,
)

__version__ = "0.1.0"
