"""Fault tolerant funnel control for linear plants with redundant actuators."""

from ._kernels import BACKEND
from .controller import CascadeState, FunnelSpec, FunnelViolation, cascade, feedback, funnel_jet
from .normalform import (
    AssumptionReport,
    NormalForm,
    build_K,
    build_U_jet,
    check_assumptions,
    detect_relative_degree,
    extract_blocks,
)
from .plant import ActuatorNonlinearity, FaultProfile, Plant, nonlinearity_eval, plant_rhs, reliability_jet
from .scenario import Scenario, boeing737, load_scenario
from .simulator import ClosedLoop, Trace, closed_loop_rhs, integrate, output_jet

__version__ = "0.1.0"
