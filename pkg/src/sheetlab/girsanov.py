"""Decoupling drift for the last of k parameter-disjoint boxes.

Take boxes ``R_1, ..., R_k`` whose projections on every axis are pairwise
disjoint, ordered along the last axis.  Write ``lvl`` for the top of ``R_{k-1}``
on axis N and ``top`` for the bottom of ``R_k`` there.  The pinning box ``R``
spans ``R_k`` on the first ``N-1`` axes and ``[lvl, hi_{k,N}]`` on the last, and
its lower-face corners sit at level ``lvl``.  The drift is carried by the slab

    U = prod_{l<N} [0, hi_{k,l}]  x  [lvl, top]

through the interpolant ``F`` (multilinear ramp of the lower-face prediction),
and subtracting the mixed increment of ``F`` over ``[0, t]`` from the sheet
leaves it unchanged below ``lvl`` and removes exactly the prediction from the
past on ``R_k``.  Everything is linear in the ``2^(N-1)`` lower-face values, so
the drift at a set of points is a coefficient matrix times those values.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import pinning
from .errors import DimMismatch, DomainError, GridMissingCorners
from .pinning import Box
from .sheet import FieldSample


@dataclass(frozen=True)
class DisjointBoxFamily:
    boxes: tuple
    M: float

    def __post_init__(self):
        boxes = tuple(b if isinstance(b, Box) else Box(*b) for b in self.boxes)
        object.__setattr__(self, "boxes", boxes)
        if len(boxes) < 2:
            raise ValueError("need at least two boxes")
        N = boxes[0].N
        if any(b.N != N for b in boxes):
            raise DimMismatch("all boxes must have the same dimension")
        M = float(self.M)
        if M <= 0:
            raise ValueError("M must be positive")
        for b in boxes:
            if min(b.lower) < 1.0 / M or max(b.upper) > M:
                raise DomainError(f"box {b} not inside [1/M, M]^N for M={M}")
        for l in range(N):
            iv = sorted((b.lower[l], b.upper[l]) for b in boxes)
            if any(iv[i][1] >= iv[i + 1][0] for i in range(len(iv) - 1)):
                raise DomainError(f"projections on axis {l} are not pairwise disjoint")
        lows = [b.lower[-1] for b in boxes]
        if lows != sorted(lows):
            raise DomainError("boxes must be ordered along the last axis")

    @property
    def N(self):
        return self.boxes[0].N

    @property
    def k(self):
        return len(self.boxes)


def random_family(rng, N, k, M=4.0):
    """A random admissible family in ``[1/M, M]^N``.

    On each axis ``2k`` sorted uniform points give ``k`` disjoint intervals;
    the first ``N-1`` axes assign them to boxes in random order.
    """
    lo = 1.0 / M
    boxes = [[[0.0] * N, [0.0] * N] for _ in range(k)]
    for l in range(N):
        pts = np.sort(rng.uniform(lo, M, size=2 * k))
        order = np.arange(k) if l == N - 1 else rng.permutation(k)
        for j, slot in enumerate(order):
            boxes[j][0][l] = pts[2 * slot]
            boxes[j][1][l] = pts[2 * slot + 1]
    return DisjointBoxFamily(tuple(Box(a, b) for a, b in boxes), M)


class DriftSpec:
    """Derived geometry of the drift built from a :class:`DisjointBoxFamily`."""

    def __init__(self, family):
        self.family = family
        last, prev = family.boxes[-1], family.boxes[-2]
        self.last = last
        self.N = family.N
        self.level = prev.upper[-1]
        self.top = last.lower[-1]
        if not self.level < self.top:
            raise DomainError("drift slab is empty: R_{k-1} and R_k overlap on axis N")
        self.pin_box = Box(last.lower[:-1] + (self.level,), last.upper)
        self.u_lower = np.array((0.0,) * (self.N - 1) + (self.level,))
        self.u_upper = np.array(last.upper[:-1] + (self.top,))
        self._s0 = np.asarray(last.lower[:-1])
        self._s1 = np.asarray(last.upper[:-1])

    @cached_property
    def face_corners(self):
        """Lower-face corners of the pinning box, binary order, at level ``lvl``."""
        return pinning.corner_points(self.pin_box, "lower-face")

    def in_u(self, ts):
        ts = np.atleast_2d(ts)
        return np.all((ts >= self.u_lower) & (ts <= self.u_upper), axis=1)

    def in_r(self, ts):
        ts = np.atleast_2d(ts)
        lo, hi = np.asarray(self.pin_box.lower), np.asarray(self.pin_box.upper)
        return np.all((ts >= lo) & (ts <= hi), axis=1)

    def in_last(self, ts):
        ts = np.atleast_2d(ts)
        lo, hi = np.asarray(self.last.lower), np.asarray(self.last.upper)
        return np.all((ts >= lo) & (ts <= hi), axis=1)

    def _project(self, ts):
        p = np.empty_like(ts)
        p[:, :-1] = np.maximum(ts[:, :-1], self._s0)
        p[:, -1] = self.level
        return p

    def interpolant_coefficients(self, ts):
        """Coefficients of the slab formula of ``F`` (no support cut-off), ``(n, 2^(N-1))``."""
        ts = np.atleast_2d(np.asarray(ts, dtype=float))
        ramp = (ts[:, -1] - self.level) / (self.top - self.level)
        damp = np.prod(np.minimum(ts[:, :-1], self._s0) / self._s0, axis=1)
        w = pinning.weight_matrix(self.pin_box, self._project(ts), "lower-face")
        return (ramp * damp)[:, None] * w

    def drift_coefficients(self, ts):
        """Coefficients of the accumulated drift over ``[0, t]``, ``(n, 2^(N-1))``.

        Mixed N-fold increment of ``F`` over the part of ``[0, t]`` inside the
        slab, by inclusion-exclusion over the ``2^N`` rectangle corners.
        """
        ts = np.atleast_2d(np.asarray(ts, dtype=float))
        n, N = ts.shape
        if N != self.N:
            raise DimMismatch(f"points have {N} parameters, family has {self.N}")
        hi = np.empty_like(ts)
        hi[:, :-1] = np.minimum(ts[:, :-1], self._s1)
        hi[:, -1] = np.minimum(ts[:, -1], self.top)
        lo = np.broadcast_to(self.u_lower, ts.shape)
        active = ts[:, -1] > self.level
        out = np.zeros((n, 2 ** (N - 1)))
        if not active.any():
            return out
        hi, lo = hi[active], lo[active]
        acc = np.zeros((hi.shape[0], out.shape[1]))
        for mask in range(2**N):
            take_hi = ((mask >> np.arange(N)) & 1).astype(bool)
            corner = np.where(take_hi, hi, lo)
            sign = -1.0 if (N - int(take_hi.sum())) % 2 else 1.0
            acc += sign * self.interpolant_coefficients(corner)
        out[active] = acc
        return out


def _face(spec, face_values):
    v = np.asarray(face_values, dtype=float)
    if v.shape[0] != 2 ** (spec.N - 1):
        raise DimMismatch(f"expected {2 ** (spec.N - 1)} lower-face values, got {v.shape[0]}")
    return v


def projection_p(spec, t):
    """Clamp ``t`` up to the pinning box on axes ``< N`` and drop axis N to ``lvl``."""
    t = np.asarray(t, dtype=float)
    if not (spec.in_u(t)[0] or spec.in_r(t)[0]):
        raise DomainError(f"t={t} outside U and R")
    return spec._project(t[None, :])[0]


def drift_F(spec, t, face_values):
    """The interpolant ``F(t)``; zero outside the slab ``U``."""
    t = np.asarray(t, dtype=float)
    face = _face(spec, face_values)
    if not spec.in_u(t)[0]:
        return np.zeros(face.shape[1:])
    return np.tensordot(spec.interpolant_coefficients(t)[0], face, axes=(0, 0))


def drift_integral(spec, t, face_values):
    """Drift accumulated over ``[0, t]``; equals the past prediction on ``R_k``."""
    t = np.asarray(t, dtype=float)
    face = _face(spec, face_values)
    return np.tensordot(spec.drift_coefficients(t)[0], face, axes=(0, 0))


def face_indices(spec, grid):
    idx = grid.locate(spec.face_corners)
    if any(i is None for i in idx):
        raise GridMissingCorners("grid lacks a lower-face corner of the pinning box")
    return idx


def face_values_from(spec, field):
    """Sheet values at the lower-face corners, read off a grid sample."""
    if field.grid is None:
        raise GridMissingCorners("decoupling needs a grid sample")
    return np.stack([field.values[i] for i in face_indices(spec, field.grid)])


def decouple_values(spec, grid, values):
    """Batched :func:`decouple` on raw arrays ``(..., *grid.shape, d)``."""
    values = np.asarray(values, dtype=float)
    nd = grid.N + 1
    if values.shape[-nd:-1] != grid.shape:
        raise DimMismatch("values do not match the grid shape")
    flat = values.reshape((-1, grid.node_count, values.shape[-1]))
    idx = face_indices(spec, grid)
    rows = [int(np.ravel_multi_index(i, grid.shape)) for i in idx]
    coef = spec.drift_coefficients(grid.nodes())
    drift = np.einsum("nc,bcd->bnd", coef, flat[:, rows, :])
    return (flat - drift).reshape(values.shape)


def decouple(spec, field):
    """Subtract the accumulated drift from a grid sample.

    Nodes with ``t_N <= lvl`` are returned bit-identical; on ``R_k`` the result
    is ``B - tilde_B``, which is independent of the sheet on ``R_1..R_{k-1}``.
    """
    if field.grid is None:
        raise GridMissingCorners("decoupling needs a grid sample")
    hat = decouple_values(spec, field.grid, field.values)
    return FieldSample(field.spec, hat, "grid", grid=field.grid, seed=field.seed,
                       meta={"decoupled": True})


def drift_energy(spec, face_values, cells=4):
    """``integral over U of |Z|^2`` where ``Z`` is the mixed derivative of ``F``.

    ``U`` is cut at the kinks ``lo_{k,l}`` so ``F`` is multilinear on every
    cell; the mixed difference over a cell divided by its volume is then the
    exact value of ``Z`` there.
    """
    face = _face(spec, face_values)
    if face.ndim == 1:
        face = face[:, None]
    axes = []
    for l in range(spec.N - 1):
        a = np.linspace(0.0, spec._s0[l], cells + 1)
        b = np.linspace(spec._s0[l], spec._s1[l], cells + 1)[1:]
        axes.append(np.concatenate([a, b]))
    axes.append(np.linspace(spec.level, spec.top, cells + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    F = (spec.interpolant_coefficients(pts) @ face).reshape(mesh[0].shape + (face.shape[1],))
    vol = np.ones([len(a) - 1 for a in axes])
    for l, a in enumerate(axes):
        shape = [1] * len(axes)
        shape[l] = -1
        vol = vol * np.diff(a).reshape(shape)
        F = np.diff(F, axis=l)
    return float(np.sum(np.sum(F**2, axis=-1) / vol))
