"""Existence, small-signal stability, and time-domain simulation for DC grids
feeding constant power loads through resistive lines.

The toolkit answers three questions about a droop-controlled DC network:
does a constant steady state exist, is it locally exponentially stable for
the configured control lag, and does the nonlinear model agree.  Everything
hangs off a single JSON grid document; see `network` for the schema.
"""

from .errors import DomainError, NumericalError, SpecError
from .existence import (Bracket, ExistenceCertificate, analytic_thresholds,
                        bracket, certify, f_matrix, f_pair, fixed_point_solve,
                        load_matrix, multistart_newton, necessary_threshold,
                        optimize_weights, single_cpl_check)
from .linalg import (PerronPair, ReducedNetwork, is_m_matrix,
                     min_symmetric_eigenvalue, perron, reduce_network,
                     solve_qep)
from .network import (AdmittancePartition, ControlParams, Line, LoadNode,
                      NetworkSpec, SourceNode, build_admittance,
                      check_connected, load_network, parse_network)
from .simulate import (Event, Scenario, SimulationTrace, load_scenario,
                       parse_scenario, simulate, solve_load_voltages)
from .stability import (StabilityReport, analyze_stability, b_max,
                        cpl_linearize, effective_admittance, jacobian,
                        sufficient_stability)

__version__ = "0.1.0"

__all__ = [
    "AdmittancePartition", "Bracket", "ControlParams", "DomainError",
    "Event", "ExistenceCertificate", "Line", "LoadNode", "NetworkSpec",
    "NumericalError", "PerronPair", "ReducedNetwork", "Scenario",
    "SimulationTrace", "SourceNode", "SpecError", "StabilityReport",
    "analytic_thresholds", "analyze_stability", "b_max", "bracket",
    "build_admittance", "certify", "check_connected", "cpl_linearize",
    "effective_admittance", "f_matrix", "f_pair", "fixed_point_solve",
    "is_m_matrix", "jacobian", "load_matrix", "load_network",
    "load_scenario", "min_symmetric_eigenvalue", "multistart_newton",
    "necessary_threshold", "optimize_weights", "parse_network",
    "parse_scenario", "perron", "reduce_network", "simulate",
    "single_cpl_check", "solve_load_voltages", "solve_qep",
    "sufficient_stability",
]
