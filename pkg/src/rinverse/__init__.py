"""Right inverses of directional differential operators on Whitney jets.

Smooth functions are expression trees, Whitney functions are their truncated
jets on sample clouds of a normal compact set, and the right inverse of
``D_v - lam`` is assembled from a rotation onto ``e_1``, a shift that flattens
a smooth surface, and a transport integral along the first axis.
"""

from .core_inverse import (
    Integral,
    WhitneyJetField,
    cutoff_flat,
    restrict,
    stilde_apply,
    stilde_jet,
)
from .expression import Expression, evaluate, jet_eval, parse
from .geometry import (
    FIXTURES,
    NormalSetDescriptor,
    SampleCloud,
    fixture,
    make_descriptor,
    sample_set,
)
from .harness import (
    ResidualReport,
    Scenario,
    ScenarioError,
    emit,
    identity_suite,
    load_scenario,
    run_scenario,
)
from .jets import Jet, JetSpace, jet_space
from .pipeline import (
    DirectionalOperator,
    OperatorProduct,
    ProductRightInverse,
    RightInverseOperator,
    apply_operator,
    build_product_inverse,
    build_right_inverse,
    factor_polynomial,
)
from .quadrature import QuadratureConfig
from .transforms import (
    ChainMap,
    OrthogonalMap,
    ShiftMap,
    flattening_map,
    orthogonal_map_to,
    pullback_expression,
)

__version__ = "0.1.0"
