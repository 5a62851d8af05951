"""Bessel-Riesz energies and capacities of discrete measures.

A discrete measure is a set of atoms on a lattice of cell width ``h``; each
atom stands for uniform mass on its cell, so the energy is the off-diagonal
double sum of the kernel plus a diagonal self-energy ``S(beta, h)`` of a
single cell.  Capacities are reciprocals of the minimal energy over the
probability simplex, found by Frank-Wolfe iterations.
"""

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .rng import substream

SELF_ENERGY_SAMPLES = 10_000
SELF_ENERGY_SEED = 20_240_917


def kappa(beta, x):
    """Riesz kernel of order ``beta`` at displacement(s) ``x`` (last axis is space).

    ``|x|^-beta`` for ``beta > 0``, ``max(1, log(1/|x|))`` for ``beta == 0``,
    ``1`` for ``beta < 0``; the value at the origin is ``inf`` unless
    ``beta < 0``.
    """
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return _kappa_r(beta, r)


def _kappa_r(beta, r):
    r = np.asarray(r, dtype=float)
    if beta < 0:
        return np.ones_like(r)
    safe = np.where(r > 0, r, 1.0)
    val = safe ** -float(beta) if beta > 0 else np.maximum(1.0, -np.log(safe))
    return np.where(r > 0, val, np.inf)


@lru_cache(maxsize=256)
def _unit_cell_distances(d, m, seed):
    rng = substream(seed, d, m)
    u = rng.random((m, d))
    v = rng.random((m, d))
    r = np.linalg.norm(u - v, axis=1)
    r.setflags(write=False)
    return r


def self_energy(beta, h, d, m=SELF_ENERGY_SAMPLES, seed=SELF_ENERGY_SEED):
    """Monte Carlo mean of ``kappa(U - V)`` for ``U, V`` uniform in a cube of side ``h``.

    For ``beta > 0`` the unit-cube estimate is rescaled by ``h^-beta``.  The
    sample mean is finite even for ``beta >= d`` where the true self-energy
    is infinite.
    """
    if beta < 0:
        return 1.0
    r = _unit_cell_distances(int(d), int(m), int(seed))
    if beta > 0:
        return float(np.mean(r ** -float(beta))) * h ** -float(beta)
    return float(np.mean(np.maximum(1.0, -np.log(h * r))))


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray
    h: float

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.shape[0] != w.size:
            raise ValueError("one weight per atom required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if not self.h > 0:
            raise ValueError("cell width h must be positive")
        if np.unique(atoms, axis=0).shape[0] != atoms.shape[0]:
            raise ValueError("atoms must be pairwise distinct")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def uniform(cls, atoms, h):
        atoms = np.atleast_2d(atoms)
        return cls(atoms, np.full(atoms.shape[0], 1.0 / atoms.shape[0]), h)

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist(), "h": self.h}

    @classmethod
    def from_dict(cls, rec):
        return cls(rec["atoms"], rec["weights"], rec["h"])

    def dumps(self):
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


class RieszOperator:
    """Symmetric kernel matrix ``K`` of a point cloud, never formed densely.

    Off-diagonal entries are ``kappa(x_i - x_j)``, diagonal entries the cell
    self-energy.  When the atoms sit on a lattice of spacing ``h`` the
    matrix-vector product is a zero-padded FFT convolution; otherwise it is a
    chunked dense sum.
    """

    def __init__(self, beta, atoms, h, self_energy_value=None):
        self.beta = float(beta)
        self.atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        self.h = float(h)
        self.n, self.d = self.atoms.shape
        self.diag = (self_energy(self.beta, self.h, self.d)
                     if self_energy_value is None else float(self_energy_value))
        self._lattice = self._fit_lattice()
        if self._lattice is not None:
            self._setup_fft()

    def _fit_lattice(self):
        origin = self.atoms.min(axis=0)
        idx = np.rint((self.atoms - origin) / self.h)
        if np.abs(origin + idx * self.h - self.atoms).max() > 1e-9 * max(self.h, 1.0):
            return None
        idx = idx.astype(np.int64)
        shape = tuple(int(s) for s in idx.max(axis=0) + 1)
        if np.prod([2 * s - 1 for s in shape], dtype=float) > 4e8:
            return None
        return idx, shape

    def _setup_fft(self):
        idx, shape = self._lattice
        offs = np.meshgrid(*[np.arange(-(s - 1), s) for s in shape], indexing="ij")
        disp = np.stack(offs, axis=-1) * self.h
        kern = _kappa_r(self.beta, np.linalg.norm(disp, axis=-1))
        kern[tuple(s - 1 for s in shape)] = self.diag
        self._kern_flat = kern.ravel()
        strides = np.array([int(np.prod([2 * t - 1 for t in shape[a + 1:]])) for a in range(len(shape))])
        self._rel = idx @ strides
        self._centre = int(np.asarray([s - 1 for s in shape]) @ strides)
        self._fshape = tuple(scipy.fft.next_fast_len(3 * s - 2, real=True) for s in shape)
        self._kern_hat = scipy.fft.rfftn(kern, self._fshape)
        self._shape = shape

    def matvec(self, w):
        w = np.asarray(w, dtype=float)
        if self._lattice is not None:
            idx, shape = self._lattice
            grid = np.zeros(shape)
            grid[tuple(idx.T)] = w
            conv = scipy.fft.irfftn(scipy.fft.rfftn(grid, self._fshape) * self._kern_hat, self._fshape)
            sl = tuple(slice(s - 1, 2 * s - 1) for s in shape)
            return conv[sl][tuple(idx.T)]
        out = np.empty(self.n)
        step = max(1, 2**22 // max(self.n, 1))
        for a in range(0, self.n, step):
            out[a:a + step] = self._rows(slice(a, a + step)) @ w
        return out

    def _rows(self, sl):
        x = self.atoms[sl]
        r = np.linalg.norm(x[:, None, :] - self.atoms[None, :, :], axis=-1)
        rows = _kappa_r(self.beta, r)
        ids = np.arange(self.n)[sl]
        rows[np.arange(ids.size), ids] = self.diag
        return rows

    def column(self, i):
        if self._lattice is not None:
            return self._kern_flat[self._rel - self._rel[i] + self._centre]
        return self._rows(slice(i, i + 1))[0]

    def entry(self, i, j):
        if i == j:
            return self.diag
        return float(_kappa_r(self.beta, np.linalg.norm(self.atoms[i] - self.atoms[j])))

    def dense(self):
        return self._rows(slice(None))


def energy(beta, mu, op=None):
    """Discrete energy of ``mu``: off-diagonal kernel sum plus cell self-energy."""
    if beta < 0:
        return 1.0
    op = op or RieszOperator(beta, mu.atoms, mu.h)
    return float(mu.weights @ op.matvec(mu.weights))


@dataclass
class EnergyMinimum:
    capacity: float
    energy: float
    weights: np.ndarray
    iterations: int
    gap: float
    converged: bool

    @property
    def relative_gap(self):
        return self.gap / self.energy if self.energy > 0 else 0.0


def minimize_energy(op, step="pairwise", max_iter=10_000, gap_tol=1e-6, rel_tol=1e-8,
                    w0=None, refresh=250):
    """Frank-Wolfe on ``min w^T K w`` over the probability simplex.

    The linear step puts mass on the atom of smallest potential ``(K w)_i``.
    ``step="pairwise"`` moves mass from the active atom of largest potential
    with exact line search and stops when the duality gap
    ``2 (E - min_i (K w)_i)`` falls below ``gap_tol * E``.  ``step="open-loop"``
    is the classical ``2 / (it + 2)`` schedule and stops when the relative
    energy change is below ``rel_tol``.
    """
    n = op.n
    w = np.full(n, 1.0 / n) if w0 is None else np.array(w0, dtype=float)
    phi = op.matvec(w)
    E = float(w @ phi)
    gap = np.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        i = int(np.argmin(phi))
        gap = 2.0 * (E - phi[i])
        if gap <= gap_tol * E:
            converged = True
            break
        if step == "open-loop":
            g = 2.0 / (it + 2.0)
            E_new = (1 - g) ** 2 * E + 2 * g * (1 - g) * phi[i] + g * g * op.diag
            w *= 1 - g
            w[i] += g
            phi = (1 - g) * phi + g * op.column(i)
            if abs(E_new - E) <= rel_tol * E:
                E = E_new
                converged = True
                break
            E = E_new
        elif step == "pairwise":
            active = np.flatnonzero(w > 0)
            j = int(active[np.argmax(phi[active])])
            if j == i:
                converged = True
                break
            a = phi[i] - phi[j]
            b = 2.0 * op.diag - 2.0 * op.entry(i, j)
            g = w[j] if b <= 0 else min(w[j], -a / b)
            w[i] += g
            w[j] -= g
            if w[j] < 1e-300:
                w[j] = 0.0
            phi = phi + g * (op.column(i) - op.column(j))
            E = E + 2 * g * a + g * g * b
        else:
            raise ValueError(f"unknown step rule {step!r}")
        if refresh and it % refresh == 0:
            w = np.clip(w, 0.0, None)
            w /= w.sum()
            phi = op.matvec(w)
            E = float(w @ phi)
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    phi = op.matvec(w)
    E = float(w @ phi)
    gap = 2.0 * (E - float(phi.min()))
    return EnergyMinimum(1.0 / E, E, w, it, gap, converged or gap <= gap_tol * E)


def capacity_estimate(beta, support, h, **opts):
    """Reciprocal of the minimal discrete energy over probability weights on ``support``.

    An empty support has capacity 0; for ``beta < 0`` every probability
    measure has energy 1, so the capacity is exactly 1.
    """
    return capacity_details(beta, support, h, **opts).capacity


def capacity_details(beta, support, h, **opts):
    pts = np.asarray(support, dtype=float)
    if pts.size == 0:
        return EnergyMinimum(0.0, np.inf, np.zeros(0), 0, 0.0, True)
    pts = np.atleast_2d(pts)
    if beta < 0:
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        return EnergyMinimum(1.0, 1.0, w, 0, 0.0, True)
    op = RieszOperator(beta, pts, h, opts.pop("self_energy_value", None))
    return minimize_energy(op, **opts)


def prolong_weights(coarse_atoms, coarse_h, coarse_weights, fine_atoms):
    """Spread coarse-cell weights evenly over the fine atoms inside each coarse cell.

    Used to warm-start minimization on a refined lattice; fine atoms outside
    every coarse cell get no mass.
    """
    coarse_atoms = np.atleast_2d(coarse_atoms)
    fine_atoms = np.atleast_2d(fine_atoms)
    origin = coarse_atoms.min(axis=0) - 0.5 * coarse_h
    key = lambda x: [tuple(r) for r in np.floor((x - origin) / coarse_h + 1e-9).astype(np.int64)]
    lookup = {k: w for k, w in zip(key(coarse_atoms), coarse_weights)}
    parents = key(fine_atoms)
    counts = {}
    for p in parents:
        counts[p] = counts.get(p, 0) + 1
    w = np.array([lookup.get(p, 0.0) / counts[p] for p in parents])
    if w.sum() <= 0:
        return np.full(len(w), 1.0 / len(w))
    return w / w.sum()


def cube_support(d, h, side=1.0, origin=0.0):
    """Cell centres of the ``h``-lattice tiling ``[origin, origin + side]^d``."""
    m = int(round(side / h))
    if abs(m * h - side) > 1e-9 * side:
        raise ValueError("side must be a multiple of h")
    c = origin + (np.arange(m) + 0.5) * h
    mesh = np.meshgrid(*([c] * d), indexing="ij")
    return np.stack([x.ravel() for x in mesh], axis=-1)


def ball_support(center, radius, h):
    """Cell centres of the ``h``-lattice (anchored at 0) lying in the closed ball."""
    center = np.asarray(center, dtype=float)
    lo = np.floor((center - radius) / h).astype(int)
    hi = np.ceil((center + radius) / h).astype(int)
    axes = [(np.arange(a, b + 1) + 0.5) * h for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([x.ravel() for x in mesh], axis=-1)
    return pts[np.linalg.norm(pts - center, axis=1) <= radius]


@dataclass(frozen=True)
class RegimeConfig:
    N: int
    d: int
    k: int

    def __post_init__(self):
        if self.N < 1 or self.d < 1:
            raise ValueError("N and d must be positive")
        if self.k < 2:
            raise ValueError("k must be at least 2")

    @property
    def gap(self):
        """``(k-1) d - 2 k N``: negative means k-multiple points exist."""
        return (self.k - 1) * self.d - 2 * self.k * self.N

    @property
    def beta_star(self):
        """Capacity exponent ``k (d - 2N)`` of the k-fold intersection criterion."""
        return self.k * (self.d - 2 * self.N)


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    gap: int
    beta_star: int
    multiple_points: bool
    capacity_vanishes: bool
    covering_exponent: int


def classify_regime(cfg):
    """Subcritical / critical / supercritical label and the capacity verdict.

    ``capacity_vanishes`` reports ``Cap_{beta*}(R^d) == 0``, which holds iff
    ``beta* >= d``; ``covering_exponent`` is ``d (k-1) - 2 (kN - 1)``, the
    power of ``2^-n`` left in the dyadic covering bound (2 at criticality).
    """
    gap = cfg.gap
    regime = "subcritical" if gap < 0 else "critical" if gap == 0 else "supercritical"
    return RegimeReport(
        regime=regime,
        gap=gap,
        beta_star=cfg.beta_star,
        multiple_points=gap < 0,
        capacity_vanishes=cfg.beta_star >= cfg.d,
        covering_exponent=cfg.d * (cfg.k - 1) - 2 * (cfg.k * cfg.N - 1),
    )
