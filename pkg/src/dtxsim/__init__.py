"""dtxsim: a multi-threaded continuous double auction market simulator.

Classic algorithmic traders (GVWY, ZIC, ZIP, GDX, AA) compete with DTX, a
small LSTM-based trader, in seeded market sessions. The package covers the
full pipeline: corpus generation from permuted trader schedules, model
training, balanced-group / one-to-many experiments, and nonparametric
comparison of profit-per-trader outcomes.
"""

__version__ = "0.1.0"

from .exchange import ASK, BID, Exchange, LobSummary, Order, OrderRejected, Trade
from .features import FeatureRecord, NormStats
from .session import (LOCKSTEP, THREADED, SessionConfig, SessionResult,
                      build_offset_series, load_config, run_session)
from .traders import CustomerOrder

__all__ = [
    "ASK", "BID", "Exchange", "LobSummary", "Order", "OrderRejected", "Trade",
    "FeatureRecord", "NormStats", "CustomerOrder",
    "LOCKSTEP", "THREADED", "SessionConfig", "SessionResult",
    "build_offset_series", "load_config", "run_session",
    "__version__",
]
