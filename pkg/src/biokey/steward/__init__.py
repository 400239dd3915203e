"""Steward share custody: HTTP service and the backup/recovery client."""
from .client import (
    DistributionReceipt,
    StewardConfig,
    StewardEndpoint,
    StewardStatus,
    distribute,
    distribute_shares,
    recover,
)
from .service import BackgroundSteward, ShareStore, StewardServer, serve

__all__ = [
    "BackgroundSteward",
    "DistributionReceipt",
    "ShareStore",
    "StewardConfig",
    "StewardEndpoint",
    "StewardServer",
    "StewardStatus",
    "distribute",
    "distribute_shares",
    "recover",
    "serve",
]
