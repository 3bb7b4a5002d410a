"""Graph-matching matched filters with solution diversification."""
from .graph import (
    CENTERED,
    NAIVE,
    DimensionError,
    Graph,
    LayeredPair,
    PaddedPair,
    frobenius_cost,
    induced_subgraph,
    objective,
    pad,
    pad_layers,
    relaxed_objective,
)
from .lap import lap_max, lap_max_reduced, reduce_topm
from .matcher import FwConfig, RestartResult, fw_solve, match_restarts

__version__ = "0.1.0"
