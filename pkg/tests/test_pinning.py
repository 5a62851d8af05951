import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sheetlab.errors import IndexMismatch, OutOfBox, SNotAdmissible, DomainError
from sheetlab.gaussian import GaussianVector, condition_gaussian
from sheetlab.pinning import (Box, bar_B, corner_points, corner_weights, is_admissible,
                              orthogonality_residual, projection_identity_residual, tilde_B)
from sheetlab.rng import substream
from sheetlab.sheet import SheetSpec, covariance_matrix, exact_sample


def random_box(rng, N, min_lower=0.0):
    lo = rng.uniform(min_lower, 1.0, N)
    return Box(lo, lo + rng.uniform(0.05, 1.0, N))


def admissible(rng, box, mode):
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    below = rng.uniform(0, 1, box.N) * lo
    above = hi + rng.uniform(0, 1, box.N)
    s = np.where(rng.random(box.N) < 0.5, below, above)
    if mode == "lower-face":
        s[-1] = below[-1]
    return s


def test_box_invariants():
    with pytest.raises(DomainError):
        Box([1.0], [1.0])
    with pytest.raises(DomainError):
        Box([-0.5], [1.0])
    assert Box([0.0, 1.0], [1.0, 2.0]).N == 2


def test_half_half():
    w = corner_weights(Box([0.0], [1.0]), [0.5]).weights
    np.testing.assert_array_equal(w, [0.5, 0.5])


def test_two_dim_full_weights():
    cw = corner_weights(Box([0.0, 0.0], [1.0, 1.0]), [0.25, 0.75])
    # corner order: bit 0 selects axis 1, bit 1 selects axis 2
    np.testing.assert_allclose(cw.corners, [[0, 0], [1, 0], [0, 1], [1, 1]])
    np.testing.assert_allclose(cw.weights, [0.1875, 0.0625, 0.5625, 0.1875], atol=1e-16)


@pytest.mark.parametrize("t2", [0.0, 0.3, 1.0])
def test_two_dim_lower_face_weights(t2):
    cw = corner_weights(Box([0.0, 0.0], [1.0, 1.0]), [0.25, t2], "lower-face")
    np.testing.assert_allclose(cw.corners, [[0, 0], [1, 0]])
    np.testing.assert_allclose(cw.weights, [0.75, 0.25], atol=1e-16)


def test_out_of_box():
    with pytest.raises(OutOfBox):
        corner_weights(Box([0.0], [1.0]), [1.5])


def test_bar_b_examples():
    r = Box([1.0], [2.0])
    a, b = 0.7, -1.3
    assert bar_B(r, [1.25], [a, b]) == pytest.approx(0.75 * a + 0.25 * b, abs=1e-15)
    box = Box([0.5, 1.0], [1.5, 3.0])
    vals = np.arange(4.0)
    for i, c in enumerate(corner_points(box)):
        assert bar_B(box, c, vals) == vals[i]
    np.testing.assert_allclose(bar_B(box, [1.0, 2.0], np.tile([[2.0, -1.0]], (4, 1))), [2.0, -1.0])


def test_bar_b_index_mismatch():
    with pytest.raises(IndexMismatch):
        bar_B(Box([0.0, 0.0], [1.0, 1.0]), [0.5, 0.5], [1.0, 2.0])


def test_tilde_b_examples():
    r = Box([0.0, 0.0], [1.0, 1.0])
    x, y = 2.0, -3.0
    assert tilde_B(r, [0.25, 0.6], [y, x]) == pytest.approx(0.25 * x + 0.75 * y)
    assert tilde_B(r, [0.4, 0.2], [5.0, 5.0]) == pytest.approx(5.0)
    outs = [tilde_B(r, [0.3, tn], [1.0, 4.0]) for tn in np.linspace(0, 1, 100)]
    assert max(outs) - min(outs) <= 1e-14


@pytest.mark.parametrize("s,s0,s1,t", [
    (2.0, 0.5, 1.0, 0.75),
    (0.2, 0.5, 1.0, 0.6),
    (0.2, 0.5, 1.0, 1.0),
    (1.0, 0.5, 1.0, 0.9),
    (0.5, 0.5, 1.0, 0.7),
])
def test_projection_identity(s, s0, s1, t):
    assert projection_identity_residual(s, s0, s1, t) <= 1e-14


def test_projection_identity_rejects_inside():
    with pytest.raises(DomainError):
        projection_identity_residual(0.7, 0.5, 1.0, 0.6)


def test_orthogonality_examples():
    assert orthogonality_residual(Box([1.0], [2.0]), [1.5], [3.0]) <= 1e-15
    assert orthogonality_residual(Box([1.0, 1.0], [2.0, 2.0]), [1.5, 1.5], [0.5, 3.0]) <= 1e-15
    r = Box([1.0, 1.0], [2.0, 2.0])
    assert orthogonality_residual(r, [1.5, 1.7], [3.0, 1.0], "lower-face") <= 1e-15


def test_orthogonality_rejects_partial_complement():
    r = Box([1.0, 1.0], [2.0, 2.0])
    with pytest.raises(SNotAdmissible):
        orthogonality_residual(r, [1.5, 1.5], [1.5, 3.0])
    with pytest.raises(SNotAdmissible):
        orthogonality_residual(r, [1.5, 1.5], [3.0, 3.0], "lower-face")
    assert not is_admissible(r, [1.5, 3.0])


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.sampled_from(["full", "lower-face"]))
def test_weights_normalized_nonnegative(N, seed, mode):
    rng = substream(seed)
    box = random_box(rng, N)
    w = corner_weights(box, rng.uniform(box.lower, box.upper), mode).weights
    assert len(w) == 2 ** (N if mode == "full" else N - 1)
    assert abs(w.sum() - 1) <= 1e-12 and w.min() >= 0


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.sampled_from(["full", "lower-face"]))
def test_orthogonality_random(N, seed, mode):
    rng = substream(seed)
    box = random_box(rng, N)
    t = rng.uniform(box.lower, box.upper)
    assert orthogonality_residual(box, t, admissible(rng, box, mode), mode) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_convex_hull(N, seed):
    rng = substream(seed)
    box = random_box(rng, N)
    vals = rng.standard_normal((2**N, 3))
    out = bar_B(box, rng.uniform(box.lower, box.upper), vals)
    assert np.all(out >= vals.min(axis=0) - 1e-12) and np.all(out <= vals.max(axis=0) + 1e-12)


def test_bar_b_matches_generic_conditioning():
    rng = substream(21)
    for _ in range(200):
        N = int(rng.integers(1, 5))
        box = random_box(rng, N, min_lower=0.05)
        t = rng.uniform(box.lower, box.upper)
        corners = corner_points(box)
        sample = exact_sample(SheetSpec(N, 1), corners, rng)
        pts = np.vstack([corners, t])
        joint = GaussianVector(np.zeros(len(pts)), covariance_matrix(pts))
        cond = condition_gaussian(joint, np.arange(len(corners)), sample.values[:, 0])
        assert abs(bar_B(box, t, sample.values)[0] - cond.mean[-1]) <= 1e-10
