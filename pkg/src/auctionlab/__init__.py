"""Call-auction simulation and pre-auction feed analytics."""

from .book import (
    AuctionBook,
    AuctionOrder,
    AuctionResult,
    ClearingResult,
    IndicativeUpdate,
)
from .errors import AuctionLabError

__version__ = "0.1.0"

__all__ = [
    "AuctionBook",
    "AuctionOrder",
    "AuctionResult",
    "ClearingResult",
    "IndicativeUpdate",
    "AuctionLabError",
    "__version__",
]
