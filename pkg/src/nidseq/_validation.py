"""Shared exceptions and array validation helpers."""

from __future__ import annotations

import numpy as np


class NidseqError(Exception):
    """Base class for all data and model errors raised by this package."""


class UnknownMagic(NidseqError):
    """Capture file does not start with a classic pcap magic number."""


class TruncatedRecord(NidseqError):
    """Capture file ends mid-header or mid-packet."""


class UnsupportedLinkType(NidseqError):
    """Capture link type is not Ethernet."""


class MalformedHeader(NidseqError):
    """A packet's protocol headers are inconsistent with their own length fields."""


class DimensionMismatch(NidseqError):
    """Array shape does not match what the model or file header requires."""


class NonFiniteLoss(NidseqError):
    """Training produced a NaN or infinite loss."""


class UnlabeledFlow(NidseqError):
    """Operation requires a ground-truth label the flow does not have."""


class InvalidDecision(NidseqError):
    """Decision value outside {0 benign, 1 malicious, 2 wait}."""


class MissingClass(NidseqError):
    """Dataset lacks one of the two labels required for balancing."""


class EmptyWindow(NidseqError):
    """Model received a window with no steps."""


class DegenerateNormalization(NidseqError):
    """Reference returns coincide, so normalized reward is undefined."""


def as_float_matrix(x, name: str, n_cols: int | None = None) -> np.ndarray:
    """Coerce to a 2-D float64 array, checking column count when given."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise DimensionMismatch(
            f"{name} must have {n_cols} columns, got {arr.shape[1]}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_float_vector(x, name: str, size: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise DimensionMismatch(f"{name} must have length {size}, got {arr.shape[0]}")
    return arr


def check_fitted(estimator, attr: str) -> None:
    if not hasattr(estimator, attr):
        from sklearn.exceptions import NotFittedError

        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
