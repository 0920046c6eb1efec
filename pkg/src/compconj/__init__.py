"""Grid-based convex conjugates of composite functions.

The package samples ``f0 + g∘F`` on rectangular grids and computes discrete
Legendre-Fenchel transforms, the candidate conjugate formulas for the
composite, perturbation duality reports, K-convexity diagnostics and
qualification-condition verdicts.
"""
from .cones import Cone, cone_angle, contains, indicator_grid, k_leq, polar
from .composite import CompositeProblem, VecMap
from .conjugate import (TransformConfig, biconjugate, conjugate, fenchel_gap, inf_convolution,
                        subdifferential)
from .duality import (chain_rule_sets, dual_value, f_star, lagrangian, optimality_equivalence_check,
                      primal_value, weak_duality_report)
from .errors import CompConjError
from .expr import FunctionExpr, parse
from .extreal import ExtReal, ext_add
from .grid import Grid, GridFn, NodeSet, grid_inf, sample
from .harness import RunReport, run_example, run_scenario
from .kconv import (horizon_cone, is_k_convex, is_k_increasing, k_f_estimate, monotone_regularize,
                    regularized_conjugate_check)
from .qual import PwlqFn, VRepSet, contains_point, contains_rint, is_pwlq, qualification_battery
from .scenario import BUILTINS, Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "BUILTINS", "CompConjError", "CompositeProblem", "Cone", "ExtReal", "FunctionExpr", "Grid",
    "GridFn", "NodeSet", "PwlqFn", "RunReport", "Scenario", "TransformConfig", "VRepSet", "VecMap",
    "biconjugate", "chain_rule_sets", "cone_angle", "conjugate", "contains", "contains_point",
    "contains_rint", "dual_value", "ext_add", "f_star", "fenchel_gap", "grid_inf", "horizon_cone",
    "indicator_grid", "inf_convolution", "is_k_convex", "is_k_increasing", "is_pwlq", "k_f_estimate",
    "k_leq", "lagrangian", "load_scenario", "monotone_regularize", "optimality_equivalence_check",
    "parse", "polar", "primal_value", "qualification_battery", "regularized_conjugate_check",
    "run_example", "run_scenario", "sample", "subdifferential", "weak_duality_report",
]
