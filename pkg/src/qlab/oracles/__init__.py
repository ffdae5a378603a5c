from .bellman import (
    DriftLinear,
    NegdefCertificate,
    QStar,
    ValueIterationError,
    bellman_optimality,
    drift_linear,
    drift_tabular,
    eps_threshold,
    expected_update,
    inner_product_constant,
    negdef_bracket,
    negdef_certificate,
    pseudo_contraction_factor,
    solve_q_star,
    update_table,
    weighted_bellman,
)
from .markov import (
    MixingFitError,
    MixingProfile,
    StationaryDist,
    StationaryError,
    mixing_profile,
    state_action_kernel,
    stationary_distribution,
)
from .moreau import MoreauToolkit, MoreauValue, moreau_value
