"""Weak-type sequence norms for finite sequences.

Three scales of size for a finite real sequence s = (s_1, ..., s_m):

* ``lp_norm``        -- the usual ell^p norm  (sum |s_j|^p)^(1/p),
* ``weak_star_norm`` -- max_k k^(1/p) * |s|_(k), where |s|_(k) is the k-th
  largest absolute value; this equals the smallest C such that the tail
  counts obey  #{ j : |s_j| > lam } <= (C / lam)^p  for every lam > 0,
* ``weak_norm``      -- max_k k^(1/p - 1) * (|s|_(1) + ... + |s|_(k)), the
  largest normalized partial sum of the decreasing rearrangement.

For every sequence and every p > 1,

    weak_star_norm <= weak_norm <= p/(p-1) * weak_star_norm,

where the left inequality is exact term by term and the right one follows
by summing the tail bound.  At p = 1 the second factor degenerates and
``weak_norm`` may exceed ``weak_star_norm`` by a factor ~ 1 + ln m.  The
full ell^p norm is controlled by ``weak_norm`` only up to a logarithmic
factor (1 + ln m)^(1/p), which is sharp on k^(-1/p) tails.

All functions accept array-likes of shape (..., m) and reduce over the
last axis, so stacked batches of sequences evaluate in one call.
A weighted variant ``weighted_weak_star`` generalizes the tail-count
functional to sequences of (value, weight) pairs where each entry counts
with a positive mass instead of 1; with unit weights it coincides with
``weak_star_norm``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "lp_norm",
    "weak_star_norm",
    "weak_norm",
    "weighted_weak_star",
    "decreasing_rearrangement",
]


def _as_batch(s) -> np.ndarray:
    a = np.asarray(s, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if not np.all(np.isfinite(a)):
        raise ValueError("sequence entries must be finite")
    return a


def _check_p(p: float, *, allow_one: bool = True) -> float:
    p = float(p)
    lo = 1.0 if allow_one else 1.0 + 1e-12
    if not np.isfinite(p) or p < lo:
        raise ValueError(f"exponent p must satisfy p >= 1, got {p}")
    return p


def decreasing_rearrangement(s) -> np.ndarray:
    """Absolute values sorted in decreasing order along the last axis."""
    a = _as_batch(s)
    return np.flip(np.sort(np.abs(a), axis=-1), axis=-1)


def lp_norm(s, p: float):
    """ell^p norm (sum_j |s_j|^p)^(1/p) over the last axis."""
    p = _check_p(p)
    a = _as_batch(s)
    if a.shape[-1] == 0:
        return np.zeros(a.shape[:-1])[()]
    peak = np.max(np.abs(a), axis=-1, keepdims=True)
    # factor out the peak so large p does not overflow
    safe = np.where(peak > 0, peak, 1.0)
    out = np.squeeze(safe, -1) * np.sum((np.abs(a) / safe) ** p, axis=-1) ** (1.0 / p)
    return out[()] if out.ndim == 0 else out


def weak_star_norm(s, p: float):
    """Smallest C with #{ j : |s_j| > lam } <= (C/lam)^p for all lam > 0.

    Evaluated in closed form as max_k k^(1/p) |s|_(k) over the decreasing
    rearrangement; reduces over the last axis.
    """
    p = _check_p(p)
    a = decreasing_rearrangement(s)
    m = a.shape[-1]
    if m == 0:
        return np.zeros(a.shape[:-1])[()]
    k = np.arange(1, m + 1, dtype=float)
    out = np.max(k ** (1.0 / p) * a, axis=-1)
    return out[()] if out.ndim == 0 else out


def weak_norm(s, p: float):
    """max_k k^(1/p - 1) * (sum of the k largest |s_j|), over the last axis."""
    p = _check_p(p)
    a = decreasing_rearrangement(s)
    m = a.shape[-1]
    if m == 0:
        return np.zeros(a.shape[:-1])[()]
    k = np.arange(1, m + 1, dtype=float)
    out = np.max(k ** (1.0 / p - 1.0) * np.cumsum(a, axis=-1), axis=-1)
    return out[()] if out.ndim == 0 else out


def weighted_weak_star(values, weights, p: float) -> float:
    """Weighted tail-count functional max_k W_k^(1/p) * |v|_(k).

    Entries are sorted by decreasing |value| and W_k is the cumulative
    weight of the k largest.  Equals the smallest C such that the total
    weight of { |v| > lam } is at most (C/lam)^p for every lam > 0.
    With unit weights this is ``weak_star_norm``.
    """
    p = _check_p(p)
    v = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if v.shape != w.shape:
        raise ValueError("values and weights must have matching shapes")
    if v.size == 0:
        return 0.0
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
        raise ValueError("values and weights must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    order = np.argsort(-np.abs(v), kind="stable")
    mag = np.abs(v)[order]
    cw = np.cumsum(w[order])
    return float(np.max(cw ** (1.0 / p) * mag))
