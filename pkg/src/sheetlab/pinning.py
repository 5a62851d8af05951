"""Closed-form conditional expectations of the sheet inside a box.

Given a box ``R = prod_l [lo_l, hi_l]``, the best prediction of ``B(t)`` for
``t`` in ``R`` from the sheet outside the open box is a multilinear
interpolation of the values at the ``2^N`` corners (``mode="full"``).  When the
sheet is only observed in the "past" of ``R`` along the last axis
(``s_N <= lo_N``), only the ``2^(N-1)`` corners on the lower face enter
(``mode="lower-face"``) and the prediction does not depend on ``t_N``.

Corners are indexed in binary order: bit ``l`` of the corner index selects
``hi_l`` (1) or ``lo_l`` (0) on axis ``l``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, DomainError, IndexMismatch, OutOfBox, SNotAdmissible
from .sheet import covariance_matrix

MODES = ("full", "lower-face")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``prod_l [lower_l, upper_l]`` with ``0 <= lower < upper``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise DimMismatch("lower and upper must be nonempty and equal length")
        if any(a < 0 or a >= b for a, b in zip(lo, hi)):
            raise DomainError(f"need 0 <= lower < upper on every axis, got {lo}, {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def N(self):
        return len(self.lower)

    def contains(self, t, atol=0.0):
        t = np.asarray(t, dtype=float)
        return bool(np.all(t >= np.asarray(self.lower) - atol) and np.all(t <= np.asarray(self.upper) + atol))

    def corners(self, mode="full"):
        return corner_points(self, mode)


@dataclass(frozen=True)
class CornerWeightSet:
    mode: str
    corners: np.ndarray
    weights: np.ndarray
    target: np.ndarray


def _free_axes(box, mode):
    if mode == "full":
        return box.N
    if mode == "lower-face":
        return box.N - 1
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _bits(m):
    idx = np.arange(2**m)
    return ((idx[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)


def corner_points(box, mode="full"):
    """Corner coordinates, shape ``(2^m, N)`` in binary order."""
    m = _free_axes(box, mode)
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    bits = _bits(m)
    out = np.empty((2**m, box.N))
    out[:, :m] = np.where(bits, hi[:m], lo[:m])
    if m < box.N:
        out[:, m:] = lo[m:]
    return out


def weight_matrix(box, ts, mode="full"):
    """Interpolation weights for many targets at once, shape ``(n, 2^m)``.

    No containment check; outside the box the weights extrapolate.
    """
    m = _free_axes(box, mode)
    ts = np.atleast_2d(np.asarray(ts, dtype=float))
    if ts.shape[1] != box.N:
        raise DimMismatch(f"targets have {ts.shape[1]} parameters, box has {box.N}")
    lo, hi = np.asarray(box.lower)[:m], np.asarray(box.upper)[:m]
    width = hi - lo
    up = (ts[:, :m] - lo) / width
    down = (hi - ts[:, :m]) / width
    bits = _bits(m)
    factors = np.where(bits[None, :, :], up[:, None, :], down[:, None, :])
    return np.prod(factors, axis=-1)


def _check_target(box, t):
    t = np.asarray(t, dtype=float)
    if t.shape != (box.N,):
        raise DimMismatch(f"target must have {box.N} coordinates")
    if not box.contains(t):
        raise OutOfBox(f"target {t} outside box {box.lower}..{box.upper}")
    return t


def corner_weights(r, t, mode="full"):
    """Weights of the corner interpolant at ``t``; they are nonnegative and sum to 1."""
    t = _check_target(r, t)
    return CornerWeightSet(mode, corner_points(r, mode), weight_matrix(r, t, mode)[0], t)


def _apply(r, t, values, mode):
    t = _check_target(r, t)
    w = weight_matrix(r, t, mode)[0]
    v = np.asarray(values, dtype=float)
    if v.shape[0] != w.size:
        raise IndexMismatch(f"expected {w.size} corner values, got {v.shape[0]}")
    return np.tensordot(w, v, axes=(0, 0))


def bar_B(r, t, corner_values):
    """Conditional mean of ``B(t)`` given the sheet off the open box ``r``."""
    return _apply(r, t, corner_values, "full")


def tilde_B(r, t, lower_face_values):
    """Conditional mean of ``B(t)`` given the sheet in the past of ``r`` along axis N."""
    return _apply(r, t, lower_face_values, "lower-face")


def projection_identity_residual(s, s0, s1, t):
    """Residual of the one-axis identity behind the corner formula.

    For ``s`` outside ``]s0, s1[`` and ``s0 <= t <= s1``::

        min(t, s) == min(s1, s) (t - s0)/(s1 - s0) + min(s0, s) (s1 - t)/(s1 - s0)
    """
    if not 0 < s0 < s1:
        raise DomainError("need 0 < s0 < s1")
    if not s0 <= t <= s1:
        raise DomainError("need s0 <= t <= s1")
    if s0 < s < s1:
        raise DomainError("s lies inside the open interval ]s0, s1[")
    rhs = min(s1, s) * (t - s0) / (s1 - s0) + min(s0, s) * (s1 - t) / (s1 - s0)
    return abs(min(t, s) - rhs)


def is_admissible(r, s, mode="full"):
    """Whether ``s`` lies in the conditioning set for ``mode``."""
    s = np.asarray(s, dtype=float)
    lo, hi = np.asarray(r.lower), np.asarray(r.upper)
    m = _free_axes(r, mode)
    outside = (s[:m] <= lo[:m]) | (s[:m] >= hi[:m])
    if not np.all(outside) or np.any(s < 0):
        return False
    return mode == "full" or bool(s[-1] <= lo[-1])


def orthogonality_residual(r, t, s, mode="full"):
    """``|E[interp(t) B(s)] - E[B(t) B(s)]|`` evaluated analytically.

    ``s`` must lie in the conditioning set: every coordinate outside its open
    interval (``full``), or the first ``N-1`` outside and ``s_N <= lo_N``
    (``lower-face``).
    """
    t = _check_target(r, t)
    s = np.asarray(s, dtype=float)
    if s.shape != t.shape:
        raise DimMismatch("s and t must have the same number of parameters")
    if not is_admissible(r, s, mode):
        raise SNotAdmissible(f"s={s} is not in the {mode} conditioning set")
    w = weight_matrix(r, t, mode)[0]
    cov_corners = covariance_matrix(corner_points(r, mode), s[None, :])[:, 0]
    lhs = float(w @ cov_corners)
    rhs = float(np.prod(np.minimum(t, s)))
    return abs(lhs - rhs)
