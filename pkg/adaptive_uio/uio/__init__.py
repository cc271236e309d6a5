from .design import UIOGains, design_gains, relative_degree, solve_star_condition
from .runtime import AuxChain, DerivativeProvider, DirtyDerivatives, OracleDerivatives, step_chain

__all__ = [
    "AuxChain",
    "DerivativeProvider",
    "DirtyDerivatives",
    "OracleDerivatives",
    "UIOGains",
    "design_gains",
    "relative_degree",
    "solve_star_condition",
    "step_chain",
]
