"""Canned experiments behind the command line.

Each experiment kind has a parameter schema (the defaults below), a
``prepare`` step that validates parameters and builds typed objects before
any sampling happens, and an ``execute`` step returning an
:class:`ExperimentResult`.  ``failures`` names every contract the run
breached; an empty list means the experiment confirmed what it checks.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import girsanov, pinning
from .capacity import (RegimeConfig, ball_support, capacity_details, classify_regime,
                       cube_support, prolong_weights)
from .gaussian import GaussianVector, condition_gaussian
from .multipoints import (PHASE_COLUMNS, SearchConfig, brute_force_multiples, check_hit,
                          check_resolution, covering_count, density_lower_bound,
                          find_near_multiples, khosh_shi_comparison, mc_phase_probability)
from .rng import substream
from .sheet import (FieldSample, GridSpec, SheetSpec, covariance_matrix, exact_values,
                    grid_values)


@dataclass
class ExperimentResult:
    tables: dict = field(default_factory=dict)  # name -> (columns, rows)
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def table(self, name, columns):
        self.tables[name] = (tuple(columns), [])
        return self.tables[name][1]

    def require(self, ok, name, message):
        if not ok:
            self.failures.append(f"{name}: {message}")


@dataclass(frozen=True)
class ExperimentKind:
    name: str
    description: str
    criteria: tuple
    defaults: dict
    default_trials: int
    prepare: object
    execute: object


def _choice(params, key, options):
    if params[key] not in options:
        raise ValueError(f"{key} must be one of {options}, got {params[key]!r}")
    return params[key]


# -- verify-pinning ----------------------------------------------------------------

def _random_box(rng, N, min_lower=0.0):
    lo = rng.uniform(min_lower, 1.0, size=N)
    return pinning.Box(lo, lo + rng.uniform(0.05, 1.0, size=N))


def _admissible_s(rng, box, mode):
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    below = rng.uniform(0.0, 1.0, size=box.N) * lo
    above = hi + rng.uniform(0.0, 1.0, size=box.N)
    s = np.where(rng.random(box.N) < 0.5, below, above)
    if mode == "lower-face":
        s[-1] = below[-1]
    return s


def _prepare_pinning(p, trials):
    _choice(p, "check", ("identities", "oracle", "all"))
    if not all(1 <= n <= 8 for n in p["N_values"]) or not p["N_values"]:
        raise ValueError("N_values must be a nonempty list in 1..8")
    if not 1 <= p["oracle_N_max"] <= 8:
        raise ValueError("oracle_N_max must be in 1..8")
    if trials < 1:
        raise ValueError("trials must be positive")
    return p, trials


def _execute_pinning(plan, seed, jobs):
    p, trials = plan
    res = ExperimentResult()
    if p["check"] in ("identities", "all"):
        rng = substream(seed, 1)
        rows = res.table("identities", ("N", "mode", "trials", "max_residual",
                                        "max_weight_sum_error", "min_weight"))
        stats = {}
        for _ in range(trials):
            N = int(rng.choice(p["N_values"]))
            box = _random_box(rng, N)
            t = rng.uniform(box.lower, box.upper)
            for mode in pinning.MODES:
                s = _admissible_s(rng, box, mode)
                r = pinning.orthogonality_residual(box, t, s, mode)
                w = pinning.corner_weights(box, t, mode).weights
                st = stats.setdefault((N, mode), [0, 0.0, 0.0, math.inf])
                st[0] += 1
                st[1] = max(st[1], r)
                st[2] = max(st[2], abs(w.sum() - 1.0))
                st[3] = min(st[3], float(w.min()))
        for (N, mode), (n, r, ws, wmin) in sorted(stats.items()):
            rows.append((N, mode, n, r, ws, wmin))
            res.require(r <= p["tol"], "orthogonality", f"N={N} {mode}: residual {r:.3g}")
            res.require(ws <= p["tol"], "weight-sum", f"N={N} {mode}: |sum-1| = {ws:.3g}")
            res.require(wmin >= 0, "weight-sign", f"N={N} {mode}: min weight {wmin:.3g}")
        res.summary["max_residual"] = max(r[3] for r in rows)
        res.summary["max_weight_sum_error"] = max(r[4] for r in rows)
        res.summary["min_weight"] = min(r[5] for r in rows)
    if p["check"] in ("oracle", "all"):
        rng = substream(seed, 2)
        rows = res.table("oracle", ("N", "instances", "max_abs_difference"))
        worst = {}
        for _ in range(trials):
            N = int(rng.integers(1, p["oracle_N_max"] + 1))
            box = _random_box(rng, N, min_lower=0.05)
            t = rng.uniform(box.lower, box.upper)
            corners = pinning.corner_points(box, "full")
            pts = np.vstack([corners, t])
            joint = GaussianVector(np.zeros(len(pts)), covariance_matrix(pts))
            vals = rng.standard_normal(len(corners))
            cond = condition_gaussian(joint, np.arange(len(corners)), vals)
            diff = abs(float(pinning.bar_B(box, t, vals)) - float(cond.mean[-1]))
            n, w = worst.get(N, (0, 0.0))
            worst[N] = (n + 1, max(w, diff))
        for N, (n, w) in sorted(worst.items()):
            rows.append((N, n, w))
            res.require(w <= p["oracle_tol"], "oracle-equivalence", f"N={N}: difference {w:.3g}")
        res.summary["max_oracle_difference"] = max(r[2] for r in rows)
    return res


# -- verify-girsanov ---------------------------------------------------------------

def _prepare_girsanov(p, trials):
    _choice(p, "check", ("telescoping", "independence", "sampler", "all"))
    if trials < 1:
        raise ValueError("trials must be positive")
    plan = {"p": p, "trials": trials}
    if p["check"] in ("independence", "all"):
        grid = GridSpec(p["grid_upper"], p["grid_cells"])
        fam = girsanov.DisjointBoxFamily(tuple(pinning.Box(*b) for b in p["boxes"]), p["M"])
        spec = girsanov.DriftSpec(fam)
        girsanov.face_indices(spec, grid)
        for b in fam.boxes:
            if any(i is None for i in grid.locate(pinning.corner_points(b))):
                raise ValueError("box corners must be grid nodes")
        plan.update(grid=grid, family=fam, spec=spec)
    if p["check"] in ("sampler", "all"):
        sgrid = GridSpec(p["sampler_upper"], p["sampler_cells"])
        pts = sgrid.nodes()
        pts = pts[np.all(pts > 0, axis=1)]
        plan.update(sampler_grid=sgrid, sampler_points=pts)
    return plan


def _z_scores(sums, n):
    """Zero-mean test statistics for ``E[x_a y_b]`` from accumulated sums."""
    sxy, sxy2 = sums
    mean = sxy / n
    var = sxy2 / n - mean**2
    return mean / np.sqrt(np.maximum(var, 1e-300) / n)


def _accumulate_cross(gen, n_total, chunk):
    """Accumulate sums of ``x y^T`` and ``(x y^T)^2`` over batches from ``gen``."""
    acc = None
    done = 0
    while done < n_total:
        m = min(chunk, n_total - done)
        x, y = gen(done, m)
        s1 = x.T @ y
        s2 = (x**2).T @ (y**2)
        acc = (s1, s2) if acc is None else (acc[0] + s1, acc[1] + s2)
        done += m
    return acc


def _execute_girsanov(plan, seed, jobs):
    p, trials = plan["p"], plan["trials"]
    res = ExperimentResult()
    if p["check"] in ("telescoping", "all"):
        rng = substream(seed, 1)
        rows = res.table("telescoping", ("N", "k", "families", "points", "max_error",
                                         "max_below_level"))
        stats = {}
        for _ in range(trials):
            N = int(rng.integers(1, p["N_max"] + 1))
            k = int(rng.integers(2, p["k_max"] + 1))
            spec = girsanov.DriftSpec(girsanov.random_family(rng, N, k))
            face = rng.standard_normal((2 ** (N - 1), p["d"]))
            last = spec.last
            ts = rng.uniform(last.lower, last.upper, size=(p["points"], N))
            coef = spec.drift_coefficients(ts)
            drift = coef @ face
            interp = pinning.weight_matrix(spec.pin_box, ts, "lower-face") @ face
            err = float(np.abs(drift - interp).max())
            below = rng.uniform(0.0, 1.0, size=(p["points"], N)) * np.asarray(last.upper)
            below[:, -1] = rng.uniform(0.0, spec.level, size=p["points"])
            zero = float(np.abs(spec.drift_coefficients(below) @ face).max())
            st = stats.setdefault((N, k), [0, 0, 0.0, 0.0])
            st[0] += 1
            st[1] += p["points"]
            st[2] = max(st[2], err)
            st[3] = max(st[3], zero)
        for (N, k), (f, n, e, z) in sorted(stats.items()):
            rows.append((N, k, f, n, e, z))
            res.require(e <= p["tol"], "telescoping", f"N={N} k={k}: error {e:.3g}")
            res.require(z == 0.0, "below-level", f"N={N} k={k}: drift {z:.3g} below level")
        res.summary["max_telescoping_error"] = max(r[4] for r in rows)
        res.summary["max_drift_below_level"] = max(r[5] for r in rows)
    if p["check"] in ("independence", "all"):
        grid, fam, spec = plan["grid"], plan["family"], plan["spec"]
        nodes = grid.nodes()
        last_idx = np.flatnonzero(spec.in_last(nodes))
        earlier = [np.flatnonzero(np.all((nodes >= b.lower) & (nodes <= b.upper), axis=1))
                   for b in fam.boxes[:-1]]
        early_idx = np.concatenate(earlier)

        def batches(decoupled):
            def gen(start, m):
                v = grid_values(grid, 1, substream(seed, 2, start), size=m)
                if decoupled:
                    v = girsanov.decouple_values(spec, grid, v)
                flat = v.reshape(m, -1)
                return flat[:, last_idx], flat[:, early_idx]
            return gen

        z = _z_scores(_accumulate_cross(batches(True), trials, p["chunk"]), trials)
        zc = _z_scores(_accumulate_cross(batches(False), trials, p["chunk"]), trials)
        rows = res.table("independence", ("last_node", "earlier_node", "z_decoupled", "z_raw"))
        for a, b in itertools.product(range(len(last_idx)), range(len(early_idx))):
            rows.append((tuple(nodes[last_idx[a]].tolist()), tuple(nodes[early_idx[b]].tolist()),
                         float(z[a, b]), float(zc[a, b])))
        res.summary["pairs"] = int(z.size)
        res.summary["max_abs_z_decoupled"] = float(np.abs(z).max())
        res.summary["max_abs_z_raw"] = float(np.abs(zc).max())
        res.require(np.abs(z).max() <= p["z_max"], "independence",
                    f"max |z| = {np.abs(z).max():.2f} exceeds {p['z_max']}")
    if p["check"] in ("sampler", "all"):
        sgrid, pts = plan["sampler_grid"], plan["sampler_points"]
        rows_idx = [int(np.ravel_multi_index(i, sgrid.shape)) for i in sgrid.locate(pts)]
        n = len(pts)
        sums = {}
        for name in ("exact", "grid"):
            s1 = np.zeros((n, n))
            s2 = np.zeros((n, n))
            done = 0
            while done < trials:
                m = min(p["chunk"], trials - done)
                if name == "exact":
                    x = exact_values(pts, 1, substream(seed, 3, done), size=m)[..., 0]
                else:
                    x = grid_values(sgrid, 1, substream(seed, 4, done), size=m)
                    x = x.reshape(m, -1)[:, rows_idx]
                prod = x[:, :, None] * x[:, None, :]
                s1 += prod.sum(axis=0)
                s2 += (prod**2).sum(axis=0)
                done += m
            mean = s1 / trials
            sums[name] = (mean, (s2 / trials - mean**2) / trials)
        (ce, ve), (cg, vg) = sums["exact"], sums["grid"]
        se = np.sqrt(ve + vg)
        zs = np.abs(ce - cg) / se
        truth = covariance_matrix(pts)
        rows = res.table("sampler", ("i", "j", "cov_exact", "cov_grid", "cov_true", "z"))
        for i, j in itertools.combinations_with_replacement(range(n), 2):
            rows.append((i, j, float(ce[i, j]), float(cg[i, j]), float(truth[i, j]),
                         float(zs[i, j])))
        res.summary["nodes"] = n
        res.summary["max_abs_z"] = float(zs.max())
        res.require(zs.max() <= p["z_max"], "sampler-equivalence",
                    f"max z = {zs.max():.2f} exceeds {p['z_max']}")
    return res


# -- covering ----------------------------------------------------------------------

def critical_triples(N_max):
    """Every ``(N, d, k)`` with ``N <= N_max`` and ``(k-1) d == 2 k N``.

    ``(k-1) d = 2kN`` forces ``k - 1`` to divide ``2N``, so the list is finite.
    """
    out = []
    for N in range(1, N_max + 1):
        for j in range(1, 2 * N + 1):
            if (2 * N) % j == 0:
                k = j + 1
                out.append((N, 2 * k * N // j, k))
    return sorted(out)


def _prepare_covering(p, trials):
    confs = []
    for k, N in p["shapes"]:
        cfg = RegimeConfig(N, 1, k)
        confs.append(SearchConfig(cfg, (p["delta"], p["K"]), p["delta"],
                                  constraint=("shared", 0, 1, 0)))
    if min(p["ns"]) < 1 or len(p["ns"]) < 2:
        raise ValueError("ns needs at least two positive integers")
    return p, confs


def _execute_covering(plan, seed, jobs):
    p, confs = plan
    res = ExperimentResult()
    rows = res.table("counts", ("k", "N", "n", "count", "log2_count", "resolved_level",
                                "target_level"))
    slopes = res.table("slopes", ("k", "N", "slope", "expected"))
    for sc in confs:
        k, N = sc.cfg.k, sc.cfg.N
        logs = []
        for n in p["ns"]:
            c = covering_count(n, sc, max_cells=p["max_cells"])
            logs.append(math.log2(c.count))
            rows.append((k, N, n, c.count, logs[-1], c.resolved_level, c.target_level))
        slope = float(np.polyfit(np.asarray(p["ns"], float), logs, 1)[0])
        expected = 2 * (k * N - 1)
        slopes.append((k, N, slope, expected))
        res.require(abs(slope - expected) <= p["slope_tol"], "covering-slope",
                    f"(k,N)=({k},{N}): slope {slope:.4f} vs {expected}")
    crit = res.table("critical", ("N", "d", "k", "gap", "covering_exponent"))
    for N, d, k in critical_triples(p["N_max"]):
        rep = classify_regime(RegimeConfig(N, d, k))
        crit.append((N, d, k, rep.gap, rep.covering_exponent))
        res.require(rep.gap == 0 and rep.covering_exponent == 2, "critical-exponent",
                    f"(N,d,k)=({N},{d},{k}) exponent {rep.covering_exponent}")
    res.summary["slopes"] = {f"{r[0]},{r[1]}": r[2] for r in slopes}
    res.summary["critical_triples"] = len(crit)
    return res


# -- density -----------------------------------------------------------------------

def _prepare_density(p, trials):
    confs = []
    for N, k in p["shapes"]:
        cfg = RegimeConfig(N, 1, k)
        confs.append(SearchConfig(cfg, (p["delta"], p["K"]), p["delta"]))
        if p["check_halving"]:
            confs.append(SearchConfig(cfg, (p["delta"] / 2, p["K"]), p["delta"] / 2))
    if trials < 1:
        raise ValueError("trials must be positive")
    return p, confs, trials


def _execute_density(plan, seed, jobs):
    p, confs, trials = plan
    res = ExperimentResult()
    rows = res.table("determinants", ("N", "k", "delta", "K", "candidates", "admissible",
                                      "min_det_values", "min_det_increments",
                                      "min_det_pinned", "dyadic_level"))
    found = {}
    for sc in confs:
        N, k = sc.cfg.N, sc.cfg.k
        rep = density_lower_bound(sc, trials, substream(seed, N, k))
        rows.append((N, k, sc.delta, sc.window[1], rep.candidates, rep.admissible,
                     rep.min_det_values, rep.min_det_increments, rep.min_det_pinned,
                     rep.dyadic_level))
        found[(N, k, sc.delta)] = rep
        if sc.delta == p["delta"]:
            res.require(rep.admissible >= p["min_admissible"], "admissible-count",
                        f"(N,k)=({N},{k}): only {rep.admissible} admissible tuples")
            for name in ("min_det_values", "min_det_increments", "min_det_pinned"):
                res.require(getattr(rep, name) > 0, "determinant-positivity",
                            f"(N,k)=({N},{k}): {name} = {getattr(rep, name):.3g}")
    if p["check_halving"]:
        for N, k in p["shapes"]:
            a, b = found[(N, k, p["delta"])], found[(N, k, p["delta"] / 2)]
            for name in ("min_det_values", "min_det_increments"):
                res.require(getattr(b, name) <= getattr(a, name), "halving-monotone",
                            f"(N,k)=({N},{k}): {name} grew when delta was halved")
    res.summary["min_det_values"] = {f"{r[0]},{r[1]},{r[2]}": r[6] for r in rows}
    return res


# -- capacity ----------------------------------------------------------------------

def _prepare_capacity(p, trials):
    for lad in p["ladders"]:
        if set(lad) != {"d", "h"}:
            raise ValueError("each ladder needs exactly the keys 'd' and 'h'")
        hs = lad["h"]
        if len(hs) < 2 or any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("ladder h values must be strictly decreasing")
        for h in hs:
            m = round(1.0 / h)
            if abs(m * h - 1.0) > 1e-9:
                raise ValueError(f"h={h} does not tile the unit cube")
    if not p["negative_beta"] < 0:
        raise ValueError("negative_beta must be negative")
    return p


def _execute_capacity(p, seed, jobs):
    res = ExperimentResult()
    rows = res.table("estimates", ("d", "beta", "h", "atoms", "capacity", "energy",
                                   "iterations", "gap", "converged"))
    opts = {"max_iter": p["max_iter"], "gap_tol": p["gap_tol"]}
    for lad in p["ladders"]:
        d = lad["d"]
        for beta in (d, d - 1, p["negative_beta"]):
            caps = []
            prev = None
            for h in lad["h"]:
                atoms = cube_support(d, h)
                w0 = None if prev is None else prolong_weights(prev[0], prev[1], prev[2], atoms)
                r = capacity_details(beta, atoms, h, w0=w0, **opts) if beta >= 0 \
                    else capacity_details(beta, atoms, h)
                rows.append((d, beta, h, len(atoms), r.capacity, r.energy, r.iterations,
                             r.gap, r.converged))
                caps.append(r.capacity)
                prev = (atoms, h, r.weights)
                res.require(r.converged, "capacity-converged",
                            f"d={d} beta={beta} h={h}: gap {r.gap:.3g} after {r.iterations}")
            if beta == d:
                res.require(all(b < a for a, b in zip(caps, caps[1:])), "critical-decrease",
                            f"d={d}: estimates {caps} not strictly decreasing")
            elif beta == d - 1:
                spread = max(caps) / min(caps) - 1
                res.require(spread <= p["stable_tol"], "subcritical-stable",
                            f"d={d}: relative spread {spread:.3f}")
            else:
                res.require(all(c == 1.0 for c in caps), "negative-beta",
                            f"d={d}: capacities {caps} not exactly 1")
    res.summary["estimates"] = len(rows)
    return res


# -- phase ---------------------------------------------------------------------------

def _prepare_phase(p, trials):
    _choice(p, "check", ("ordering", "search-oracle", "all"))
    plan = {"p": p, "trials": trials}
    if p["check"] in ("ordering", "all"):
        grid = GridSpec([p["grid_upper"]], [p["grid_cells"]])
        confs = {}
        for mode in p["modes"]:
            _choice({"mode": mode}, "mode", ("self", "independent"))
            for d in (p["d_sub"], p["d_super"]):
                sc = SearchConfig(RegimeConfig(1, d, p["k"]), tuple(p["window"]), p["delta"],
                                  max(p["eps_ladder"]), mode)
                confs[(mode, d)] = sc
        sub, sup = RegimeConfig(1, p["d_sub"], p["k"]), RegimeConfig(1, p["d_super"], p["k"])
        if classify_regime(sub).regime != "subcritical":
            raise ValueError(f"d_sub={p['d_sub']} is not subcritical")
        if classify_regime(sup).regime != "supercritical":
            raise ValueError(f"d_super={p['d_super']} is not supercritical")
        if any(e < 0 for e in p["eps_ladder"]):
            raise ValueError("eps values must be nonnegative")
        for sc in confs.values():
            check_resolution(grid, sc)
        plan.update(grid=grid, confs=confs)
    if p["check"] in ("search-oracle", "all"):
        setups = []
        for s in p["oracle_setups"]:
            g = GridSpec(s["upper"], s["cells"])
            if g.node_count > 1000:
                raise ValueError("oracle grids are limited to 1000 nodes")
            cons = s["constraint"] if isinstance(s["constraint"], str) else tuple(s["constraint"])
            sc = SearchConfig(RegimeConfig(g.N, s["d"], 2), tuple(s["window"]), s["delta"],
                              s["eps"], "self", cons)
            check_resolution(g, sc)
            setups.append((g, sc))
        plan.update(setups=setups)
    return plan


def _execute_phase(plan, seed, jobs):
    p, trials = plan["p"], plan["trials"]
    res = ExperimentResult()
    if p["check"] in ("ordering", "all"):
        grid, confs = plan["grid"], plan["confs"]
        for mode in p["modes"]:
            rows = res.table(f"phase_{mode}", PHASE_COLUMNS)
            table = {}
            for d in (p["d_sub"], p["d_super"]):
                out = mc_phase_probability(confs[(mode, d)], p["eps_ladder"], trials, seed,
                                           grid, jobs)
                table[d] = out
                rows.extend(r.as_tuple() for r in out)
                ests = [r.estimate for r in sorted(out, key=lambda r: -r.eps)]
                res.require(all(b <= a for a, b in zip(ests, ests[1:])), "eps-monotone",
                            f"{mode} d={d}: estimates not nonincreasing in eps")
            for sub, sup in zip(table[p["d_sub"]], table[p["d_super"]]):
                res.require(sup.estimate < sub.estimate and sup.wilson_hi < sub.wilson_lo,
                            "phase-ordering",
                            f"{mode} eps={sub.eps}: supercritical [{sup.wilson_lo:.3f}, "
                            f"{sup.wilson_hi:.3f}] vs subcritical [{sub.wilson_lo:.3f}, "
                            f"{sub.wilson_hi:.3f}]")
            res.summary[f"{mode}_estimates"] = {
                f"d={d},eps={r.eps}": r.estimate for d, out in table.items() for r in out}
    if p["check"] in ("search-oracle", "all"):
        rows = res.table("search_oracle", ("instance", "N", "d", "nodes", "constraint",
                                           "hits_bucketed", "hits_brute", "equal", "sound"))
        setups = plan["setups"]
        mismatches = 0
        for inst in range(p["oracle_instances"]):
            g, sc = setups[inst % len(setups)]
            spec = SheetSpec(g.N, sc.cfg.d)
            f = FieldSample(spec, grid_values(g, spec.d, substream(seed, 5, inst)), "grid",
                            grid=g, seed=seed)
            fast = find_near_multiples(f, sc)
            slow = brute_force_multiples(f, sc)
            equal = [h.nodes for h in fast] == [h.nodes for h in slow]
            sound = all(check_hit(h, sc) for h in fast)
            mismatches += not (equal and sound)
            rows.append((inst, g.N, sc.cfg.d, g.node_count, str(sc.constraint), len(fast),
                         len(slow), equal, sound))
            res.require(equal, "search-completeness", f"instance {inst}: hit sets differ")
            res.require(sound, "search-soundness", f"instance {inst}: a hit breaks its constraint")
        res.summary["oracle_instances"] = p["oracle_instances"]
        res.summary["oracle_mismatches"] = mismatches
    return res


# -- hitting -------------------------------------------------------------------------

def _prepare_hitting(p, trials):
    N, d = p["N"], p["d"]
    if not d > 2 * N:
        raise ValueError(f"hitting needs d > 2N, got N={N}, d={d}")
    if len(p["center"]) != d:
        raise ValueError("center must have d coordinates")
    pinning.Box(p["box_lower"], p["box_upper"])
    grids = []
    for lev in p["levels"]:
        if set(lev) != {"h", "cells"}:
            raise ValueError("each level needs exactly the keys 'h' and 'cells'")
        grids.append(GridSpec([p["time_upper"]] * N, [lev["cells"]] * N))
    if not p["shrink"] > 1:
        raise ValueError("shrink must exceed 1")
    return p, grids, trials


def _execute_hitting(plan, seed, jobs):
    p, grids, trials = plan
    res = ExperimentResult()
    rows = res.table("hitting", ("radius", "h", "cells", "atoms", "hits", "trials",
                                 "probability", "wilson_lo", "wilson_hi", "capacity", "ratio",
                                 "capacity_converged"))
    opts = {"max_iter": p["max_iter"]}
    reps = {}
    for radius in (p["radius"], p["radius"] / p["shrink"]):
        for lev, grid in zip(p["levels"], grids):
            atoms = ball_support(p["center"], radius, lev["h"])
            rep = khosh_shi_comparison(p["N"], p["d"], p["box_lower"], p["box_upper"], atoms,
                                       lev["h"], grid, trials, seed, opts)
            reps[(radius, lev["h"])] = rep
            rows.append((radius, lev["h"], lev["cells"], len(atoms), rep.hits, rep.trials,
                         rep.probability, rep.wilson[0], rep.wilson[1], rep.capacity,
                         rep.ratio, rep.capacity_converged))
    big = [reps[(p["radius"], lev["h"])] for lev in p["levels"]]
    ratios = [r.ratio for r in big]
    finite = all(r is not None and math.isfinite(r) and r > 0 for r in ratios)
    res.require(finite, "ratio-finite", f"ratios {ratios}")
    if finite:
        span = max(ratios) / min(ratios)
        res.summary["ratio_span"] = span
        res.require(span <= p["factor"], "ratio-stable", f"max/min ratio {span:.3f}")
    for lev in p["levels"]:
        a, b = reps[(p["radius"], lev["h"])], reps[(p["radius"] / p["shrink"], lev["h"])]
        res.require(b.probability < a.probability and b.capacity < a.capacity,
                    "shrink-monotone", f"h={lev['h']}: shrinking did not lower both")
    res.summary["ratios"] = ratios
    return res


KINDS = {
    k.name: k for k in [
        ExperimentKind(
            "verify-pinning",
            "corner-interpolation identities and the conditioning oracle",
            (1, 2),
            {"check": "all", "N_values": [1, 2, 3, 4, 5], "tol": 1e-12,
             "oracle_N_max": 4, "oracle_tol": 1e-10},
            10_000, _prepare_pinning, _execute_pinning),
        ExperimentKind(
            "verify-girsanov",
            "drift telescoping, decoupled independence, and grid-vs-exact sampling",
            (3, 4, 5),
            {"check": "telescoping", "N_max": 4, "k_max": 4, "d": 1, "points": 20,
             "tol": 1e-12, "grid_upper": [2.0, 2.0], "grid_cells": [8, 8],
             "boxes": [[[1.5, 0.25], [2.0, 0.75]], [[0.5, 1.25], [1.0, 1.75]]], "M": 4.0,
             "sampler_upper": [2.0, 1.6], "sampler_cells": [5, 4], "chunk": 5000,
             "z_max": 5.0},
            1_000, _prepare_girsanov, _execute_girsanov),
        ExperimentKind(
            "covering",
            "dyadic box counts of the shared-coordinate slice and critical exponents",
            (7,),
            {"shapes": [[2, 1], [2, 2], [3, 2]], "ns": [3, 4, 5, 6, 7], "delta": 0.1,
             "K": 2.0, "max_cells": 2**21, "slope_tol": 0.1, "N_max": 4},
            1, _prepare_covering, _execute_covering),
        ExperimentKind(
            "density",
            "covariance determinants over separated parameter tuples",
            (6,),
            {"shapes": [[2, 2], [3, 3]], "delta": 0.1, "K": 2.0, "min_admissible": 10_000,
             "check_halving": True},
            20_000, _prepare_density, _execute_density),
        ExperimentKind(
            "capacity",
            "Riesz capacity of the unit cube under grid refinement",
            (8,),
            {"ladders": [{"d": 1, "h": [0.125, 0.0625, 0.03125, 0.015625]},
                         {"d": 2, "h": [0.125, 0.0625, 0.03125, 0.015625]},
                         {"d": 3, "h": [0.5, 0.25, 0.125, 0.0625]}],
             "negative_beta": -1.0, "stable_tol": 0.15, "max_iter": 50_000, "gap_tol": 1e-6},
            1, _prepare_capacity, _execute_capacity),
        ExperimentKind(
            "phase",
            "near-double-point probabilities across regimes, and the search oracle",
            (9, 10),
            {"check": "ordering", "k": 2, "d_sub": 2, "d_super": 5, "grid_upper": 2.0,
             "grid_cells": 128, "window": [0.5, 2.0], "delta": 0.1,
             "eps_ladder": [0.2, 0.1, 0.05], "modes": ["self", "independent"],
             "oracle_instances": 50,
             "oracle_setups": [
                 {"upper": [2.0], "cells": [63], "d": 1, "window": [0.1, 2.0], "delta": 0.1,
                  "eps": 0.05, "constraint": "distinct"},
                 {"upper": [1.0, 1.0], "cells": [20, 20], "d": 2, "window": [0.1, 1.0],
                  "delta": 0.25, "eps": 0.1, "constraint": "distinct"},
                 {"upper": [1.0, 1.0], "cells": [20, 20], "d": 1, "window": [0.1, 1.0],
                  "delta": 0.25, "eps": 0.02, "constraint": ["shared", 0, 1, 0]}]},
            1_000, _prepare_phase, _execute_phase),
        ExperimentKind(
            "hitting",
            "hitting probability of a ball against its Newtonian-type capacity",
            (11,),
            {"N": 1, "d": 3, "box_lower": [1.0], "box_upper": [2.0], "time_upper": 2.0,
             "center": [1.0, 0.0, 0.0], "radius": 1.0, "shrink": 2.0,
             "levels": [{"h": 0.4, "cells": 64}, {"h": 0.2, "cells": 256},
                        {"h": 0.1, "cells": 1024}],
             "factor": 3.0, "max_iter": 50_000},
            2_000, _prepare_hitting, _execute_hitting),
    ]
}
