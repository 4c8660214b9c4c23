"""Capped-terminal-wealth portfolio optimization.

Dynamic policies for mean-LPM, mean-CVaR, and mean-variance objectives on a
lognormal multi-asset market, plus Monte-Carlo replication and a static
buy-and-hold CVaR baseline.
"""

from .errors import CapfolioError
from .market import MarketModel, deflator_moments, market_from_config, validate_market
from .lpm import LpmProblem, solve_lpm

__all__ = [
    "CapfolioError",
    "MarketModel",
    "LpmProblem",
    "deflator_moments",
    "market_from_config",
    "solve_lpm",
    "validate_market",
]
