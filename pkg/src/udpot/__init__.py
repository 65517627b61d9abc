"""Top-level package for udpot.

import flattening and version handling
"""

try:
    from ._version import version as __version__
except ImportError:
    __version__ = "0.0.0"

# Name the MEMPROF level
from udpot.logger import register_levels

register_levels()

# Import flattening
from udpot.base import HypothesisError, PreconditionError, RegularityReport, UdpotError
from udpot.space import QuasiMetricSpace, ball, build_space, quasi_triangle_constant
from udpot.measure import (
    DiscreteMeasure,
    GridFunction,
    ahlfors_fit,
    ball_measure,
    build_measure,
    check_upper_doubling,
    estimate_doubling_constant,
    lower_type_check,
)
from udpot.dominating import (
    BallMeasure,
    DominatingFunction,
    Power,
    PowerField,
    Tabulated,
    build_lambda,
)
from udpot.glue import (
    TwoComponentSpace,
    build_glued,
    glued_measure,
    lambda_piecewise,
    lambda_simplified,
    verify_ball_estimates,
)
from udpot.lebesgue import (
    ExponentFunction,
    char_ball_lower_bound,
    embedding_check,
    luxemburg_norm,
    modular,
)
from udpot.operators import (
    KernelSpec,
    maximal_modified,
    maximal_standard,
    omega,
    parse_kernel,
    potential,
)
from udpot.verify import (
    ExperimentReport,
    Level,
    function_family,
    verify_comparison,
    verify_hedberg,
    verify_maximal_bounds,
    verify_necessity,
    verify_sufficiency,
)
from udpot.config import RunConfig
