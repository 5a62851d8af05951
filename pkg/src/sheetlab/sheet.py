"""Simulation of the N-parameter, d-dimensional Brownian sheet.

Two samplers are provided.  :func:`exact_sample` draws the sheet at an
arbitrary finite parameter set from its covariance ``prod_l min(s_l, t_l)``.
:func:`grid_sample` builds the sheet on a regular grid anchored at the origin
from white noise: every grid cell gets an independent centered Gaussian with
variance equal to the cell volume and the node value is the sum over the
rectangle ``[0, node]``, computed with one prefix-sum sweep per axis.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import gaussian
from .errors import ContractViolation, DimMismatch, DomainError, GridTooLarge
from .rng import as_generator

#: Default cap on grid node count (per state coordinate, per draw).
MAX_GRID_NODES = 2**24

#: Axes longer than this use compensated prefix sums.
KAHAN_THRESHOLD = 2**12

FIELD_FORMAT_VERSION = 1


def as_points(pts, N=None):
    """Coerce parameter points to a float array of shape ``(n, N)``."""
    p = np.atleast_2d(np.asarray(pts, dtype=float))
    if p.ndim != 2:
        raise DimMismatch(f"points must be a list of N-vectors, got shape {p.shape}")
    if N is not None and p.shape[1] != N:
        raise DimMismatch(f"expected {N} parameters per point, got {p.shape[1]}")
    if np.any(p < 0):
        raise DomainError("parameter coordinates must be nonnegative")
    return p


@dataclass(frozen=True)
class SheetSpec:
    N: int
    d: int = 1

    def __post_init__(self):
        if int(self.N) < 1 or int(self.d) < 1:
            raise ValueError(f"need N >= 1 and d >= 1, got N={self.N}, d={self.d}")


@dataclass(frozen=True)
class GridSpec:
    """Regular rectilinear grid: ``cells[l]`` equal cells on ``[lower[l], upper[l]]``."""

    upper: tuple
    cells: tuple
    lower: tuple = None

    def __post_init__(self):
        upper = tuple(float(u) for u in np.atleast_1d(self.upper))
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        lower = (0.0,) * len(upper) if self.lower is None else tuple(
            float(a) for a in np.atleast_1d(self.lower))
        if not len(upper) == len(cells) == len(lower):
            raise DimMismatch("lower, upper and cells must have one entry per axis")
        if any(c < 1 for c in cells):
            raise ValueError("cell counts must be positive")
        if any(a < 0 or a >= b for a, b in zip(lower, upper)):
            raise ValueError("need 0 <= lower < upper on every axis")
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lower", lower)

    @property
    def N(self):
        return len(self.upper)

    @property
    def shape(self):
        """Node array shape."""
        return tuple(c + 1 for c in self.cells)

    @property
    def node_count(self):
        return int(np.prod(self.shape))

    @property
    def spacing(self):
        return np.array([(b - a) / c for a, b, c in zip(self.lower, self.upper, self.cells)])

    def axes(self):
        """Node coordinates along each axis."""
        return [np.linspace(a, b, c + 1) for a, b, c in zip(self.lower, self.upper, self.cells)]

    def nodes(self):
        """All nodes, row-major, shape ``(node_count, N)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def locate(self, pts, atol=1e-9):
        """Multi-indices of grid nodes equal to ``pts``; ``None`` rows where absent."""
        pts = as_points(pts, self.N)
        h = self.spacing
        lo = np.asarray(self.lower)
        j = np.rint((pts - lo) / h)
        ok = np.all(np.abs(lo + j * h - pts) <= atol * np.maximum(1.0, np.abs(pts)), axis=1)
        ok &= np.all((j >= 0) & (j <= np.asarray(self.cells)), axis=1)
        out = []
        for row, good in zip(j.astype(int), ok):
            out.append(tuple(row) if good else None)
        return out

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper), "cells": list(self.cells)}


@dataclass(frozen=True)
class FieldSample:
    """Realized sheet values.

    ``values`` has shape ``grid.shape + (d,)`` for grid samples and
    ``(len(points), d)`` for exact samples.
    """

    spec: SheetSpec
    values: np.ndarray
    provenance: str
    grid: GridSpec = None
    points: np.ndarray = None
    seed: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in ("exact", "grid"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        v = np.asarray(self.values, dtype=float)
        if self.provenance == "grid":
            if self.grid is None or v.shape != self.grid.shape + (self.spec.d,):
                raise DimMismatch("grid values must have shape grid.shape + (d,)")
        else:
            if self.points is None or v.shape != (len(self.points), self.spec.d):
                raise DimMismatch("exact values must have shape (len(points), d)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def at(self, pts):
        """Values at grid nodes ``pts`` (grid samples only)."""
        idx = self.grid.locate(pts)
        if any(i is None for i in idx):
            raise KeyError("point is not a grid node")
        return np.stack([self.values[i] for i in idx])

    def to_dict(self):
        """JSON-ready record; ``values`` flattened row-major."""
        rec = {
            "format": "sheetlab.FieldSample",
            "version": FIELD_FORMAT_VERSION,
            "N": self.spec.N,
            "d": self.spec.d,
            "provenance": self.provenance,
            "seed": self.seed,
            "shape": list(self.values.shape),
            "values": self.values.ravel().tolist(),
        }
        if self.grid is not None:
            rec["grid"] = self.grid.to_dict()
        else:
            rec["points"] = np.asarray(self.points).tolist()
        return rec

    @classmethod
    def from_dict(cls, rec):
        if rec.get("format") != "sheetlab.FieldSample":
            raise ValueError("not a FieldSample record")
        if rec.get("version") != FIELD_FORMAT_VERSION:
            raise ValueError(f"unsupported FieldSample version {rec.get('version')}")
        spec = SheetSpec(rec["N"], rec["d"])
        values = np.asarray(rec["values"], dtype=float).reshape(rec["shape"])
        grid = GridSpec(**rec["grid"]) if "grid" in rec else None
        points = np.asarray(rec["points"], dtype=float) if "points" in rec else None
        return cls(spec, values, rec["provenance"], grid=grid, points=points, seed=rec["seed"])

    def dumps(self):
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def sheet_covariance(s, t):
    """``prod_l min(s_l, t_l)``, the covariance of one sheet coordinate."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.shape[-1:] != t.shape[-1:]:
        raise DimMismatch(f"points have {s.shape[-1]} and {t.shape[-1]} parameters")
    return np.prod(np.minimum(s, t), axis=-1)


def covariance_matrix(pts, other=None):
    """Matrix ``[sheet_covariance(p_i, q_j)]`` for point arrays."""
    p = as_points(pts)
    q = p if other is None else as_points(other, p.shape[1])
    return np.prod(np.minimum(p[:, None, :], q[None, :, :]), axis=-1)


def exact_values(pts, d, rng, size=None):
    """Raw exact draws; shape ``(n, d)`` or ``(size, n, d)``."""
    rng = as_generator(rng)
    c = covariance_matrix(pts)
    L, _ = gaussian.cholesky(c)
    n = c.shape[0]
    m = 1 if size is None else int(size)
    z = rng.standard_normal((m, d, n))
    x = np.einsum("ij,mdj->mid", L, z)
    return x[0] if size is None else x


def exact_sample(spec, pts, rng, seed=None):
    """Draw the sheet at ``pts`` from the exact joint covariance.

    The ``d`` coordinates are independent scalar fields.  Degenerate point sets
    (repeated points, points on coordinate hyperplanes) go through the jitter
    ladder of :func:`sheetlab.gaussian.cholesky`.
    """
    p = as_points(pts, spec.N)
    values = exact_values(p, spec.d, rng)
    return FieldSample(spec, values, "exact", points=p, seed=seed)


def _kahan_cumsum(a, axis):
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    total = np.zeros_like(a[0])
    comp = np.zeros_like(a[0])
    for i in range(a.shape[0]):
        y = a[i] - comp
        t = total + y
        comp = (t - total) - y
        total = t
        out[i] = total
    return np.moveaxis(out, 0, axis)


def white_noise_partial_sums(noise, axes):
    """Prefix sums of cell increments along ``axes``, zero-padded at index 0."""
    out = noise
    for ax in axes:
        if out.shape[ax] > KAHAN_THRESHOLD:
            out = _kahan_cumsum(out, ax)
        else:
            out = np.cumsum(out, axis=ax)
    pad = [(0, 0)] * out.ndim
    for ax in axes:
        pad[ax] = (1, 0)
    return np.pad(out, pad)


def grid_values(grid, d, rng, size=None, max_nodes=MAX_GRID_NODES):
    """Raw grid draws; shape ``grid.shape + (d,)`` or ``(size,) + grid.shape + (d,)``."""
    if any(a != 0.0 for a in grid.lower):
        raise DomainError("grid sampler needs every axis to start at 0")
    if grid.node_count > max_nodes:
        raise GridTooLarge(f"{grid.node_count} nodes exceeds cap {max_nodes}")
    rng = as_generator(rng)
    m = 1 if size is None else int(size)
    vol = float(np.prod(grid.spacing))
    noise = rng.standard_normal((m, d) + grid.cells) * np.sqrt(vol)
    axes = tuple(range(2, 2 + grid.N))
    sums = white_noise_partial_sums(noise, axes)
    sums = np.moveaxis(sums, 1, -1)
    return sums[0] if size is None else sums


def grid_sample(spec, grid, rng, seed=None, max_nodes=MAX_GRID_NODES):
    """Draw the sheet on ``grid`` by white-noise partial sums.

    Nodes on a coordinate hyperplane ``{t_l = 0}`` are exactly zero.
    """
    if grid.N != spec.N:
        raise DimMismatch(f"grid has {grid.N} axes, sheet has N={spec.N}")
    values = grid_values(grid, spec.d, rng, max_nodes=max_nodes)
    return FieldSample(spec, values, "grid", grid=grid, seed=seed)


def increment_decomposition_cov(base, t, tol=1e-12):
    """``Var(B(t) - B(base))`` for ``base <= t``, computed two ways.

    Directly it is ``prod t - prod base``.  Splitting the rectangle
    ``[0, t]`` minus ``[0, base]`` into the ``2^N - 1`` independent sheets
    indexed by nonempty axis subsets gives
    ``sum_A prod_{l not in A} base_l * prod_{l in A} (t_l - base_l)``.
    """
    base = np.asarray(base, dtype=float)
    t = np.asarray(t, dtype=float)
    if base.shape != t.shape or base.ndim != 1:
        raise DimMismatch("base and t must be N-vectors of equal length")
    if np.any(base < 0) or np.any(t < base):
        raise DomainError("need 0 <= base <= t componentwise")
    direct = float(np.prod(t) - np.prod(base))
    gaps = t - base
    by_subsets = 0.0
    N = t.size
    for mask in itertools.product((False, True), repeat=N):
        if not any(mask):
            continue
        m = np.array(mask)
        by_subsets += float(np.prod(gaps[m]) * np.prod(base[~m]))
    if abs(direct - by_subsets) > tol * max(1.0, float(np.prod(t))):
        raise ContractViolation(
            "increment-decomposition", f"direct {direct!r} vs subsets {by_subsets!r}")
    return direct


def scaling_check(c, pts):
    """Largest ``|Cov(B(c*p_i), B(c*p_j)) - prod(c) Cov(B(p_i), B(p_j))|``."""
    c = np.asarray(c, dtype=float)
    p = as_points(pts)
    if c.shape != (p.shape[1],):
        raise DimMismatch("scale vector must have one entry per parameter axis")
    if np.any(c <= 0):
        raise DomainError("scale factors must be positive")
    lhs = covariance_matrix(p * c)
    rhs = np.prod(c) * covariance_matrix(p)
    return float(np.abs(lhs - rhs).max())
