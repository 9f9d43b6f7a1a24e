"""Isotropic realization of current fields: given a divergence-free ``j``,
find ``sigma > 0`` and ``u`` with ``j = sigma grad u``."""

from .errors import (EvalDomain, ExprSyntaxError, FlowBlowup, FlowError, NoConvergence,
                     NoCrossing, NonFiniteField, PreconditionFailed, RealizabilityError,
                     SingularDirection, StepUnderflow)
from .fields import Box, ConditionReport, VectorField, check_conditions, curl, divergence
from .dsl import FieldSpec, compile_field, eval_expr, parse_expr, to_text
from .flows import (FlowDirection, Normalization, Trajectory, TripleCoordinates,
                    commutation_defect, forward_map, integrate_flow, invert_coordinates)
from .realizer import (ReconstructedW, ResidualReport, compute_w, verify_residuals,
                       w_at_point)
from .periodic import BoundednessScan, boundedness_scan, periodize_w, torus_verdict
from .planar import PlanarPotential, hitting_time, planar_residual
from . import catalog

__version__ = "1.0.0"
