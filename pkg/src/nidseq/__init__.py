"""Packet-level intrusion detection as return-conditioned sequence modeling."""

from nidseq._validation import (
    DegenerateNormalization,
    DimensionMismatch,
    EmptyWindow,
    InvalidDecision,
    MalformedHeader,
    MissingClass,
    NidseqError,
    NonFiniteLoss,
    TruncatedRecord,
    UnknownMagic,
    UnlabeledFlow,
    UnsupportedLinkType,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateNormalization",
    "DimensionMismatch",
    "EmptyWindow",
    "InvalidDecision",
    "MalformedHeader",
    "MissingClass",
    "NidseqError",
    "NonFiniteLoss",
    "TruncatedRecord",
    "UnknownMagic",
    "UnlabeledFlow",
    "UnsupportedLinkType",
    "__version__",
]
