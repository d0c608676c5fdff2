"""Response comparison and provisioning-based spectrum selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DegenerateInputError


def _values(x) -> np.ndarray:
    v = getattr(x, "values", x)
    return np.asarray(v, dtype=float)


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape or a.ndim != 1:
        raise ArgumentError(f"responses must be equal-length vectors, got {a.shape} and {b.shape}")
    for v in (a, b):
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ArgumentError("responses must be finite and non-negative")


def channel_distance(h_t, h_t0) -> np.ndarray:
    """Per-index normalized distance ``1 - 2 sqrt(a^2 b^2) / (a^2 + b^2)``.

    Evaluated as ``(1 - r)^2 / (1 + r^2)`` with ``r = min/max`` so that it is
    exactly symmetric, never under/overflows and stays inside [0, 1]. Two zero
    magnitudes count as equal (distance 0).
    """
    a = _values(h_t)
    b = _values(h_t0)
    _check_pair(a, b)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, lo / hi, 1.0)
    return (1.0 - r) ** 2 / (1.0 + r * r)


@dataclass(frozen=True, eq=False)
class SelectionMask:
    keep: np.ndarray
    alpha: np.ndarray
    drop_fraction: float

    @property
    def L(self) -> int:
        return self.keep.size

    @property
    def n_kept(self) -> int:
        return int(self.keep.sum())

    @classmethod
    def full(cls, L: int) -> SelectionMask:
        return cls(np.ones(L, dtype=bool), np.zeros(L), 0.0)


def mnd(h_t, h_t0, mask: SelectionMask | None = None) -> float:
    """Mean normalized deviation, optionally restricted to the kept indices."""
    d = channel_distance(h_t, h_t0)
    if mask is None:
        return float(d.mean())
    keep = np.asarray(mask.keep, dtype=bool)
    if keep.shape != d.shape:
        raise ArgumentError(f"mask length {keep.size} does not match response length {d.size}")
    if not keep.any():
        raise DegenerateInputError("mask keeps no indices")
    return float(d[keep].mean())


def alpha_profile(reference, provisioning) -> np.ndarray:
    """Per-index maximum distance of the provisioning responses to the reference."""
    provisioning = list(provisioning)
    if not provisioning:
        raise ArgumentError("provisioning set is empty")
    ref = _values(reference)
    alpha = np.zeros_like(ref)
    for r in provisioning:
        np.maximum(alpha, channel_distance(r, ref), out=alpha)
    return alpha


def drop_count(L: int, drop_fraction: float) -> int:
    # Tolerance guards against products such as 0.29 * 100 = 28.999999999999996.
    return int(math.floor(drop_fraction * L + 1e-9))


def build_mask(alpha, drop_fraction: float = 0.3) -> SelectionMask:
    """Drop the ``floor(drop_fraction * L)`` indices with the largest alpha.

    Among equal alpha values the higher index is dropped first.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or not np.all(np.isfinite(alpha)):
        raise ArgumentError("alpha must be a finite vector")
    if not 0 <= drop_fraction < 1:
        raise ArgumentError("drop_fraction must lie in [0, 1)")
    L = alpha.size
    n_drop = drop_count(L, drop_fraction)
    idx = np.arange(L)
    order = np.lexsort((-idx, -alpha))
    keep = np.ones(L, dtype=bool)
    keep[order[:n_drop]] = False
    alpha = alpha.copy()
    keep.flags.writeable = False
    alpha.flags.writeable = False
    return SelectionMask(keep, alpha, float(drop_fraction))
