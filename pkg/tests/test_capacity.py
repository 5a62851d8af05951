import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sheetlab.capacity import (DiscreteMeasure, RegimeConfig, RieszOperator, capacity_details,
                               capacity_estimate, classify_regime, cube_support, ball_support,
                               energy, kappa, minimize_energy, prolong_weights, self_energy)
from sheetlab.experiments import critical_triples
from sheetlab.rng import substream


@pytest.mark.parametrize("beta,x,expected", [
    (2.0, [0.5, 0.0], 4.0),
    (1.0, [3.0, 4.0], 0.2),
    (0.0, [1.0, 0.0, 0.0], 1.0),
    (0.0, [np.exp(-3.0)], 3.0),
    (-1.0, [7.0, 1.0], 1.0),
    (-1.0, [0.0, 0.0], 1.0),
])
def test_kernel_values(beta, x, expected):
    assert kappa(beta, x) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("beta", [0.0, 0.5, 3.0])
def test_kernel_singular_at_origin(beta):
    assert kappa(beta, [0.0, 0.0]) == np.inf


@pytest.mark.parametrize("d,mean", [(2, 0.5214054), (3, 0.6617071)])
def test_cell_sampler_mean_distance(d, mean):
    # mean distance between uniform points of the unit square / cube
    from sheetlab.capacity import _unit_cell_distances
    r = _unit_cell_distances(d, 10_000, 20_240_917)
    assert r.mean() == pytest.approx(mean, abs=3 * r.std() / 100)


def test_self_energy_scaling_against_direct_sampling():
    beta, d = 1.0, 3
    ours, direct = [], []
    rng = substream(99)
    for h in (0.1, 0.05, 0.025):
        u, v = rng.random((200_000, d)) * h, rng.random((200_000, d)) * h
        direct.append(np.mean(np.linalg.norm(u - v, axis=1) ** -beta))
        ours.append(self_energy(beta, h, d))
    np.testing.assert_allclose(ours, direct, rtol=0.03)
    slope = np.polyfit(np.log([0.1, 0.05, 0.025]), np.log(direct), 1)[0]
    assert slope == pytest.approx(-beta, abs=0.05)


def test_energy_negative_beta_is_one():
    mu = DiscreteMeasure([[0.0], [1.0], [5.0]], [0.2, 0.3, 0.5], 0.1)
    assert energy(-2.0, mu) == 1.0


def test_energy_two_atoms():
    h = 1e-3
    mu = DiscreteMeasure([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], [0.5, 0.5], h)
    expected = 2 * 0.25 * 1.0 + 0.5 * self_energy(1.0, h, 3)
    assert energy(1.0, mu) == pytest.approx(expected, rel=1e-12)


def test_operator_fft_matches_dense():
    atoms = cube_support(2, 0.125)
    op = RieszOperator(1.5, atoms, 0.125)
    w = substream(1).random(len(atoms))
    np.testing.assert_allclose(op.matvec(w), op.dense() @ w, rtol=1e-10)
    np.testing.assert_allclose(op.column(5), op.dense()[:, 5], rtol=1e-12)
    irregular = substream(2).random((30, 2))
    op2 = RieszOperator(1.0, irregular, 0.01)
    d = kappa(1.0, irregular[:, None] - irregular[None])
    np.fill_diagonal(d, op2.diag)
    np.testing.assert_allclose(op2.dense(), d, rtol=1e-12)


def test_measure_validation_and_json():
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0], [1.0]], [0.5, 0.6], 0.1)
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0], [0.0]], [0.5, 0.5], 0.1)
    mu = DiscreteMeasure.uniform([[0.0, 1.0], [2.0, 3.0]], 0.25)
    back = DiscreteMeasure.loads(mu.dumps())
    np.testing.assert_array_equal(back.atoms, mu.atoms)
    np.testing.assert_array_equal(back.weights, mu.weights)
    assert back.h == 0.25


def test_capacity_trivial_cases():
    assert capacity_estimate(1.0, np.zeros((0, 2)), 0.1) == 0.0
    assert capacity_estimate(-0.5, cube_support(2, 0.25), 0.25) == 1.0


def test_duality_gap_at_termination():
    for d, beta in [(1, 0.5), (2, 1.0), (2, 2.0), (3, 1.0)]:
        res = capacity_details(beta, cube_support(d, 0.25 if d == 3 else 0.125),
                               0.25 if d == 3 else 0.125)
        assert res.converged
        assert res.gap <= 1e-6 * res.energy
        assert abs(res.weights.sum() - 1) <= 1e-12 and res.weights.min() >= 0


def test_open_loop_rule_runs():
    atoms = cube_support(2, 0.25)
    op = RieszOperator(1.0, atoms, 0.25)
    fw = minimize_energy(op, step="open-loop", max_iter=5000)
    pw = minimize_energy(op)
    assert fw.energy >= pw.energy - 1e-12
    assert fw.energy == pytest.approx(pw.energy, rel=0.01)
    with pytest.raises(ValueError):
        minimize_energy(op, step="bogus")


def test_capacity_monotone_in_support():
    h = 0.125
    big = cube_support(2, h)
    small = big[np.all(big < 0.5, axis=1)]
    tiny = small[np.all(small < 0.25, axis=1)]
    caps = [capacity_estimate(1.0, s, h) for s in (tiny, small, big)]
    assert caps[0] <= caps[1] <= caps[2]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_capacity_monotone_in_beta(seed):
    rng = substream(seed)
    atoms = np.unique(np.floor(rng.random((40, 2)) * 8), axis=0) / 8 + 1 / 16
    caps = [capacity_estimate(b, atoms, 0.125) for b in (0.0, 0.5, 1.0, 1.5, 2.0)]
    assert all(a >= b - 1e-8 for a, b in zip(caps, caps[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.sampled_from([0.0, 1.0, 2.0]))
def test_energy_convexity(seed, t, beta):
    rng = substream(seed)
    atoms = cube_support(2, 0.25)
    mu = DiscreteMeasure(atoms, rng.dirichlet(np.ones(len(atoms))), 0.25)
    nu = DiscreteMeasure(atoms, rng.dirichlet(np.ones(len(atoms))), 0.25)
    mix = DiscreteMeasure(atoms, t * mu.weights + (1 - t) * nu.weights, 0.25)
    assert energy(beta, mix) <= t * energy(beta, mu) + (1 - t) * energy(beta, nu) + 1e-10


def test_critical_trend_small():
    caps = []
    prev = None
    for h in (0.25, 0.125, 0.0625):
        atoms = cube_support(2, h)
        w0 = None if prev is None else prolong_weights(prev[0], prev[1], prev[2], atoms)
        res = capacity_details(2.0, atoms, h, w0=w0)
        caps.append(res.capacity)
        prev = (atoms, h, res.weights)
    assert caps[0] > caps[1] > caps[2]


def test_prolongation_conserves_mass():
    coarse = cube_support(2, 0.5)
    fine = cube_support(2, 0.25)
    w = prolong_weights(coarse, 0.5, np.array([0.4, 0.3, 0.2, 0.1]), fine)
    assert w.sum() == pytest.approx(1.0)
    assert sorted(set(np.round(w, 12))) == [0.025, 0.05, 0.075, 0.1]


def test_ball_support():
    atoms = ball_support([0.0, 0.0, 0.0], 1.0, 0.1)
    assert np.all(np.linalg.norm(atoms, axis=1) <= 1.0)
    assert len(atoms) * 0.1**3 == pytest.approx(4 / 3 * np.pi, rel=0.05)


@pytest.mark.parametrize("cfg,regime,gap,beta_star,exists", [
    ((2, 8, 2), "critical", 0, 8, False),
    ((2, 6, 2), "subcritical", -2, 4, True),
    ((1, 5, 2), "supercritical", 1, 6, False),
])
def test_classify(cfg, regime, gap, beta_star, exists):
    rep = classify_regime(RegimeConfig(*cfg))
    assert (rep.regime, rep.gap, rep.beta_star, rep.multiple_points) == (regime, gap, beta_star, exists)
    if regime == "critical":
        assert rep.beta_star == cfg[1] and rep.capacity_vanishes


def test_critical_covering_exponent_is_two():
    triples = critical_triples(4)
    assert (1, 4, 2) in triples and (2, 8, 2) in triples and (1, 3, 3) in triples
    for N, d, k in triples:
        assert (k - 1) * d == 2 * k * N
        assert classify_regime(RegimeConfig(N, d, k)).covering_exponent == 2


def test_regime_config_validation():
    with pytest.raises(ValueError):
        RegimeConfig(1, 2, 1)


# -- independent optimizer oracle ---------------------------------------------------

def _simplex_projection(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, len(v) + 1) > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def projected_gradient_capacity(m, h, beta, iters=400, seed=7):
    """Accelerated projected gradient on the unit cube lattice, numpy.fft convolution."""
    rng = np.random.default_rng(seed)
    x, y = rng.random((200_000, 3)), rng.random((200_000, 3))
    diag = np.mean(np.linalg.norm(x - y, axis=1) ** -beta) * h**-beta
    n = 2 * m
    g = np.arange(n)
    g = np.where(g < m, g, g - n) * h
    r = np.sqrt(sum(a**2 for a in np.meshgrid(g, g, g, indexing="ij")))
    kern = np.fft.rfftn(np.where(r > 0, np.where(r > 0, r, 1.0) ** -beta, diag))

    def apply(w):
        pad = np.zeros((n, n, n))
        pad[:m, :m, :m] = w.reshape(m, m, m)
        return np.fft.irfftn(np.fft.rfftn(pad) * kern, s=(n, n, n), axes=(0, 1, 2))[
            :m, :m, :m].ravel()

    v = np.random.default_rng(1).random(m**3)
    for _ in range(30):
        v = apply(v)
        v /= np.linalg.norm(v)
    lip = 2 * v @ apply(v)
    w = np.full(m**3, 1.0 / m**3)
    z, tk = w.copy(), 1.0
    for _ in range(iters):
        wn = _simplex_projection(z - 2 * apply(z) / lip)
        tn = (1 + np.sqrt(1 + 4 * tk * tk)) / 2
        z = wn + (tk - 1) / tn * (wn - w)
        w, tk = wn, tn
    return 1.0 / (w @ apply(w))


def test_unit_cube_against_projected_gradient():
    prev = None
    for h in (0.2, 0.1, 0.05):
        atoms = cube_support(3, h)
        w0 = None if prev is None else prolong_weights(prev[0], prev[1], prev[2], atoms)
        res = capacity_details(1.0, atoms, h, w0=w0, max_iter=50_000)
        prev = (atoms, h, res.weights)
    oracle = projected_gradient_capacity(40, 0.025, 1.0)
    assert res.capacity == pytest.approx(oracle, rel=0.10)
