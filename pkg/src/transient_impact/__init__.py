"""Asymptotic trading policies under temporary and transient price impact.

The package solves the matrix Riccati equation behind the small-friction
expansion of the value function, builds the induced feedback trading
rules, assembles the first-order value approximation and checks all of
it by Monte Carlo simulation of the frictional objective.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    HorizonError,
    NonFiniteStateError,
    NotPositiveDefiniteError,
    NumericalError,
    RiccatiError,
    SingularCovarianceError,
    StiffnessError,
    TransientImpactError,
)
from .model import (  # noqa: E402
    ConstantModel,
    FrictionSpec,
    MarketModel,
    MonteCarlo,
    OUModel,
    frictionless_value,
    linear_signal,
    merton_portfolio,
    merton_qv,
    tanh_signal,
)
from .riccati import (  # noqa: E402
    RiccatiProblem,
    RiccatiSolution,
    certify,
    problem_from_parameters,
    solve,
    solve_1d_closed_form,
    solve_maximal,
)
from .policy import (  # noqa: E402
    Grid,
    PolicySpec,
    asymptotic,
    constant_coeff,
    policy_vector_field,
    temporary_only,
    trading_rate,
    zero,
)
from .expansion import ExpansionTerms, assemble_vhat, corrector_u, expansion_target, source_a  # noqa: E402
from .simulator import (  # noqa: E402
    InitialState,
    SimConfig,
    evaluate_objective,
    evaluate_via_decomposition,
    simulate,
)
from .harness import PolicyChoice, SweepPlan, reproduce_figures, run_expansion_sweep  # noqa: E402
