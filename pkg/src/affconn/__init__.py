"""Connections over anchored affine bundles, with verified transport.

The package models an affine bundle with an anchor map, puts a
(generally nonlinear) connection on it, and provides parallel
transport, affineness detection, the induced covariant derivatives,
two linearised connections with their coefficient tables, and the
pseudo-SODE / Lagrangian machinery of affine Lie algebroids.  Every
construction ships with a check that compares it against an
independent route (numeric integration, finite differences, bracket
computations), runnable from scenario files via the ``affconn`` CLI.
"""

__version__ = "0.1.0"

from .bundle import (AdmissibleCurve, AnchorSpec, ChartSpec, EPoint,
                     ProlongedSection, SectionE, SectionEbar, SectionV,
                     TildeSection, ValidationError, canonical_section,
                     check_admissible)
from .connection import (AffineSplit, Connection, NotAffineError,
                         affine_split, is_affine, nabla, nabla_bar,
                         nabla_tilde)
from .expr import EvalDomainError, Expr, ExprError, ParseError, parse, to_str
from .sampling import SampleBox
from .scenario import Scenario, ScenarioError, load_scenario, run_checks
from .transport import (DiscreteCurve, TransportConfig,
                        horizontal_lift_curve, lie_transport,
                        parallel_translate)

__all__ = [
    "AdmissibleCurve", "AffineSplit", "AnchorSpec", "ChartSpec",
    "Connection", "DiscreteCurve", "EPoint", "EvalDomainError", "Expr",
    "ExprError", "NotAffineError", "ParseError", "ProlongedSection",
    "SampleBox", "Scenario", "ScenarioError", "SectionE", "SectionEbar",
    "SectionV", "TildeSection", "TransportConfig", "ValidationError",
    "affine_split", "canonical_section", "check_admissible",
    "horizontal_lift_curve", "is_affine", "lie_transport", "load_scenario",
    "nabla", "nabla_bar", "nabla_tilde", "parallel_translate", "parse",
    "run_checks", "to_str", "__version__",
]
