"""Trajectories of the complex flow z' = f(z) for meromorphic f."""
from .conformal import (
    Arc, CaptureFailed, LevelCurve, Line, NotAPole, PathBlocked, PathSpec, PoleLocalData, PoleTime,
    contour_integral_reciprocal, pole_incoming_directions, time_to_pole, trace_level_curve, travel_time,
)
from .expr import (
    EvalOutcome, Expression, ExprSyntaxError, InconclusiveOrder, NonFiniteValue, compile_numpy,
    compile_scalar, differentiate, evaluate, format_complex, local_order, parse, parse_complex, to_text,
)
from .flow import (
    EquilibriumApproach, EscapedFiniteTime, EscapeTime, IntegrationControls, NoFiniteTimeEscape, Periodic,
    ReachedPole, SeedRejected, StepUnderflow, TimeBudgetExhausted, Trajectory, escape_time, integrate,
    termination_from_dict, zero_approach_bound_check,
)
from .wv import (
    Antiderivative, CoefficientSeries, EscapeScanReport, ScanAborted, TailNotDominated, WvContext, build_F,
    central_index, escape_scan, max_modulus_point, power_law_deviation,
)

__version__ = "0.1.0"
