"""Dense Gaussian linear algebra.

Covariance validation, Cholesky factorization with a bounded jitter ladder,
multivariate normal sampling and exact Gaussian conditioning by Schur
complement.  The conditioning routine is the generic oracle against which the
closed-form corner interpolants in :mod:`sheetlab.pinning` are checked.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionTooLarge, NotPSD, SingularObservation
from .rng import as_generator

#: Relative jitter ladder, in units of ``trace(c) / dim``.
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)

#: Above this size exact sampling is refused; use the grid sampler instead.
MAX_DIM = 4096


def validate_cov(c, check_psd=True):
    """Return ``c`` as a float array after checking the covariance invariants.

    Symmetric to 1e-12 relative, nonnegative diagonal and, unless
    ``check_psd`` is false, smallest eigenvalue above ``-1e-10 * trace``.
    """
    c = np.array(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"covariance must be square, got shape {c.shape}")
    n = c.shape[0]
    if n > MAX_DIM:
        raise DimensionTooLarge(f"dimension {n} exceeds cap {MAX_DIM}")
    if n == 0:
        return c
    scale = max(np.abs(c).max(), np.finfo(float).tiny)
    if np.abs(c - c.T).max() > 1e-12 * scale:
        raise ValueError("covariance is not symmetric")
    if np.any(np.diag(c) < 0):
        raise ValueError("covariance has a negative diagonal entry")
    if check_psd:
        lam = np.linalg.eigvalsh(c)[0]
        if lam < -1e-10 * np.trace(c):
            raise NotPSD(f"minimum eigenvalue {lam:.3e} below tolerance")
    return c


def cholesky(c, jitter_policy=JITTER_LADDER[-1], check_psd=True):
    """Lower Cholesky factor with the smallest jitter that succeeds.

    Parameters
    ----------
    c : array_like, shape (n, n)
        Covariance matrix.
    jitter_policy : float
        Largest relative jitter allowed; ladder rungs above it are skipped.

    Returns
    -------
    L : ndarray
        Lower triangular, ``L @ L.T == c + jitter * I``.
    jitter : float
        Absolute jitter actually added to the diagonal.
    """
    c = validate_cov(c, check_psd=check_psd)
    n = c.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    unit = np.trace(c) / n
    if unit == 0.0:
        # PSD with zero trace means c == 0.
        return np.zeros_like(c), 0.0
    for rung in JITTER_LADDER:
        if rung > jitter_policy:
            break
        jitter = rung * unit
        try:
            L = np.linalg.cholesky(c + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
    raise NotPSD(f"factorization failed at jitter {jitter_policy:g} * trace/dim")


@dataclass(frozen=True)
class GaussianVector:
    """Mean vector and covariance of a finite Gaussian vector."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(f"mean length {mean.size} does not match cov {cov.shape}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size


def sample_mvn(g, rng, size=None, jitter_policy=JITTER_LADDER[-1]):
    """Draw from ``g``.

    Returns shape ``(dim,)`` when ``size`` is None, else ``(size, dim)``.
    A zero covariance returns the mean exactly.
    """
    rng = as_generator(rng)
    L, _ = cholesky(g.cov, jitter_policy)
    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, g.dim))
    x = g.mean + z @ L.T
    return x[0] if size is None else x


def condition_gaussian(joint, observed_idx, observed_vals, jitter_policy=JITTER_LADDER[-1]):
    """Exact conditional law of ``joint`` given ``x[observed_idx] = observed_vals``.

    The result has the same dimension as ``joint``: observed components carry
    the observed values with zero variance, the rest the Schur-complement mean
    and covariance.  Conditioning again on the same data is a no-op.
    """
    idx = np.asarray(observed_idx, dtype=int).reshape(-1)
    vals = np.asarray(observed_vals, dtype=float).reshape(-1)
    if idx.size != vals.size:
        raise ValueError("observed_idx and observed_vals differ in length")
    if idx.size == 0:
        return joint
    if np.unique(idx).size != idx.size:
        raise ValueError("observed_idx has repeated entries")
    n = joint.dim
    free = np.setdiff1d(np.arange(n), idx)
    mu, c = joint.mean, joint.cov

    c_oo = c[np.ix_(idx, idx)]
    resid = vals - mu[idx]
    if not np.any(c_oo):
        # Degenerate observation: consistent only if it reproduces the mean.
        if np.allclose(resid, 0.0, rtol=0.0, atol=1e-12 * max(1.0, np.abs(vals).max())):
            mean = mu.copy()
            mean[idx] = vals
            return GaussianVector(mean, c)
        raise SingularObservation("zero-variance observation disagrees with the mean")
    try:
        L, _ = cholesky(c_oo, jitter_policy, check_psd=False)
    except NotPSD as exc:
        raise SingularObservation(str(exc)) from exc

    c_fo = c[np.ix_(free, idx)]
    a = scipy.linalg.solve_triangular(L, c_fo.T, lower=True)
    b = scipy.linalg.solve_triangular(L, resid, lower=True)
    mean = mu.copy()
    mean[free] = mu[free] + a.T @ b
    mean[idx] = vals
    cov = np.zeros_like(c)
    c_ff = c[np.ix_(free, free)] - a.T @ a
    cov[np.ix_(free, free)] = 0.5 * (c_ff + c_ff.T)
    return GaussianVector(mean, cov)
