"""Microstate counting in no-collapse quantum mechanics.

Build equiamplitude expansions of finite-dimensional states, check that
symmetry forces equal weights on equal-amplitude microstates, count the
microstates inside a projector and compare with the Born rule, and run
two-spin correlation experiments on top of the counting.
"""

from .errors import (
    BranchCountError,
    DimensionMismatch,
    DimensionTooSmall,
    InvalidOperator,
    NoFreeDirection,
    PeelUnderflow,
    ZeroState,
)
from .hilbert import (
    DEFAULT_TOL,
    FullSpace,
    KronSubspace,
    ProjectorOp,
    StateVector,
    Subspace,
    Tolerance,
    UnitaryOp,
    embed,
    embed_projector,
    inner,
    random_projector,
    random_unitary,
    tensor,
)
from .expansion import Expansion, ExpansionReport, construct, extend, peel, split_two, validate
from .event_space import (
    EventSpace,
    ProbAssignment,
    SwapTriple,
    build_event_space,
    build_swap_triple,
    check_assignment,
    forced_equalities,
)
from .microprob import (
    BranchCount,
    Label,
    adapt,
    adapt_family,
    born_weight,
    converge,
    count,
    embed_for_counting,
    locality_check,
    uniqueness_check,
)
from .eprb import (
    EprbScenario,
    Setting,
    chsh,
    joint_table,
    outcome_independence,
    parameter_independence,
    product_counting,
    singlet,
    spin_projector,
)

__version__ = "0.1.0"
