"""Numerical verification of sufficient conditions for bang-zero-bang L1 extremals."""

from . import synthetic, vehicle_bench  # noqa: F401  (populate the registries)
from .config import RunConfig, load_config, parse_config
from .errors import VerificationError
from .extremal import ReferenceSchedule, integrate_reference_extremal, shoot_extremal
from .geometry import ProblemDefinition, get_problem_factory, registered_problems
from .pipeline import VerificationReport, VerifyOptions, verify

__all__ = [
    "ProblemDefinition", "ReferenceSchedule", "RunConfig", "VerificationError",
    "VerificationReport", "VerifyOptions", "get_problem_factory", "integrate_reference_extremal",
    "load_config", "parse_config", "registered_problems", "shoot_extremal", "verify",
]
