"""Near-multiple-point search and the experiments built on it.

Exact equality ``B(t^1) = ... = B(t^k)`` is invisible on a grid, so the
searches look for parameter tuples whose field values lie within ``eps`` of
each other (pairwise Euclidean distance), with the parameters pairwise at
least ``delta`` apart and obeying a coordinate constraint:

``"distinct"``
    no two points share any coordinate;
``("shared", i, j, l)``
    points ``i`` and ``j`` share coordinate ``l`` (0-based).  In self mode
    the tuple is unordered, so this means "some pair shares coordinate l".
"""

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .capacity import RegimeConfig, capacity_details, classify_regime
from .errors import CountOverflow, DomainError, ResolutionTooCoarse
from .rng import substream
from .sheet import FieldSample, SheetSpec, covariance_matrix, grid_values
from . import pinning

Z95 = NormalDist().inv_cdf(0.975)

PHASE_COLUMNS = ("N", "d", "k", "regime", "eps", "trials", "hits", "estimate",
                 "wilson_lo", "wilson_hi", "seed")


@dataclass(frozen=True)
class SearchConfig:
    cfg: RegimeConfig
    window: tuple
    delta: float
    eps: float = 0.1
    mode: str = "self"
    constraint: object = "distinct"

    def __post_init__(self):
        a, b = (float(x) for x in self.window)
        object.__setattr__(self, "window", (a, b))
        if not 0 < a < b:
            raise ValueError(f"window needs 0 < a < b, got {self.window}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.delta < (b - a) * math.sqrt(self.cfg.N):
            raise ValueError(f"delta={self.delta} is not below the window diameter")
        if not self.eps >= 0:
            raise ValueError("eps must be nonnegative")
        if self.mode not in ("self", "independent"):
            raise ValueError(f"mode must be 'self' or 'independent', got {self.mode!r}")
        c = self.constraint
        if isinstance(c, (list, tuple)):
            c = tuple(c)
            object.__setattr__(self, "constraint", c)
        if c != "distinct":
            if not (isinstance(c, tuple) and len(c) == 4 and c[0] == "shared"):
                raise ValueError(f"constraint must be 'distinct' or ('shared', i, j, l), got {c!r}")
            _, i, j, l = c
            if not (0 <= i < j < self.cfg.k and 0 <= l < self.cfg.N):
                raise ValueError(f"shared constraint indices out of range: {c}")

    @property
    def shared(self):
        return None if self.constraint == "distinct" else self.constraint[1:]


@dataclass(frozen=True)
class MultiPointHit:
    nodes: tuple
    params: tuple
    spread: float
    values: tuple


def wilson_interval(hits, n, z=Z95):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = hits / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


# -- search ------------------------------------------------------------------

def _dist(a, b):
    return np.sqrt(np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=-1))


def _separated(a, b, delta):
    """``|a - b| >= delta`` up to rounding, so grid pairs at distance exactly delta count."""
    return _dist(a, b) >= delta * (1 - 1e-12)


def _window_nodes(grid, window):
    a, b = window
    idx = np.array(list(np.ndindex(*grid.shape)))
    pts = grid.nodes()
    tol = 1e-12 * max(1.0, b)
    keep = np.all((pts >= a - tol) & (pts <= b + tol), axis=1)
    return idx[keep], pts[keep]


def check_resolution(grid, sc):
    """Raise unless the grid spacing is at most ``delta / (3 sqrt N)``."""
    if grid.N != sc.cfg.N:
        raise ResolutionTooCoarse(f"grid has {grid.N} axes, config has N={sc.cfg.N}")
    if grid.spacing.max() > sc.delta / (3 * math.sqrt(sc.cfg.N)) * (1 + 1e-12):
        raise ResolutionTooCoarse(
            f"grid spacing {grid.spacing.max():g} exceeds delta/(3 sqrt N) = "
            f"{sc.delta / (3 * math.sqrt(sc.cfg.N)):g}")


def _field_list(fields, sc):
    if sc.mode == "self":
        fl = [fields] if not isinstance(fields, (list, tuple)) else list(fields)
        if len(fl) != 1:
            raise ValueError("self mode takes a single field")
    else:
        fl = list(fields)
        if len(fl) != sc.cfg.k:
            raise ValueError(f"independent mode needs k={sc.cfg.k} fields")
        if any(f.grid != fl[0].grid or f.spec != fl[0].spec for f in fl):
            raise ValueError("independent fields must share spec and grid")
    if fl[0].grid is None:
        raise ValueError("search needs grid samples")
    if fl[0].spec.d != sc.cfg.d or fl[0].spec.N != sc.cfg.N:
        raise ValueError("field spec does not match the regime config")
    return fl


def _bucket_codes(keys):
    """Encode integer keys (n, d) as int64 codes and the encoder for offsets."""
    lo = keys.min(axis=0) - 1
    k = keys - lo
    base = k.max(axis=0) + 2
    if np.sum(np.log2(base.astype(float))) >= 62:
        return None
    mult = np.concatenate([[1], np.cumprod(base[:-1])]).astype(np.int64)
    return k.astype(np.int64) @ mult, mult


def _candidate_pairs(va, vb, eps, same):
    """Index pairs ``(p, q)`` whose values fall in neighbouring eps-buckets.

    Superset of all pairs within Euclidean distance ``eps``.  With ``same``
    the two sets coincide and each unordered pair appears once with p < q.
    """
    na, nb = len(va), len(vb)
    if na == 0 or nb == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if not np.isfinite(eps):
        p, q = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
        pairs = np.stack([p.ravel(), q.ravel()], axis=1)
        return pairs[pairs[:, 0] < pairs[:, 1]] if same else pairs
    d = va.shape[1]
    allv = va if same else np.vstack([va, vb])
    if eps == 0:
        _, inv = np.unique(allv, axis=0, return_inverse=True)
        keys = inv.reshape(-1, 1).astype(np.int64)
        offsets = np.zeros((1, 1), dtype=np.int64)
    else:
        keys = np.floor(allv / eps).astype(np.int64)
        offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
    enc = _bucket_codes(keys)
    if enc is None:
        return _candidate_pairs_dict(keys, na, offsets, same)
    codes, mult = enc
    ca, cb = (codes, codes) if same else (codes[:na], codes[na:])
    order = np.argsort(cb, kind="stable")
    sorted_b = cb[order]
    out = []
    for off in offsets:
        if same:
            nz = np.flatnonzero(off)
            if nz.size and off[nz[-1]] < 0:
                continue  # mirror of a kept offset
        target = ca + off @ mult
        left = np.searchsorted(sorted_b, target, "left")
        right = np.searchsorted(sorted_b, target, "right")
        cnt = right - left
        if not cnt.any():
            continue
        p = np.repeat(np.arange(na), cnt)
        start = np.repeat(left - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
        q = order[start + np.arange(cnt.sum())]
        if same and not off.any():
            keep = p < q
            p, q = p[keep], q[keep]
        out.append(np.stack([p, q], axis=1))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.concatenate(out)
    return np.sort(pairs, axis=1) if same else pairs


def _candidate_pairs_dict(keys, na, offsets, same):
    buckets = {}
    b_keys = keys if same else keys[na:]
    for q, key in enumerate(map(tuple, b_keys)):
        buckets.setdefault(key, []).append(q)
    out = []
    for p, key in enumerate(map(tuple, keys[:na])):
        for off in offsets:
            for q in buckets.get(tuple(np.add(key, off)), ()):
                if not same or p < q:
                    out.append((p, q))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _pair_filter(idx_a, idx_b, pa, pb, va, vb, sc):
    """Mask of pairs satisfying separation, spread and (if asked) distinctness."""
    ok = _separated(pa, pb, sc.delta)
    ok &= _dist(va, vb) <= sc.eps
    if sc.constraint == "distinct":
        ok &= np.all(idx_a != idx_b, axis=1)
    return ok


def _tuple_ok(idx_tuple, sc, ordered):
    if sc.constraint == "distinct":
        return True
    i, j, l = sc.shared
    if ordered:
        return idx_tuple[i][l] == idx_tuple[j][l]
    return any(a[l] == b[l] for a, b in itertools.combinations(idx_tuple, 2))


def _make_hit(members, idx_sets, pt_sets, val_sets):
    nodes = tuple(tuple(int(x) for x in idx_sets[f][n]) for f, n in members)
    params = tuple(tuple(float(x) for x in pt_sets[f][n]) for f, n in members)
    vals = np.stack([val_sets[f][n] for f, n in members])
    spread = max(float(_dist(a, b)) for a, b in itertools.combinations(vals, 2))
    return MultiPointHit(nodes, params, spread, tuple(map(tuple, vals.tolist())))


def find_near_multiples(fields, sc):
    """All grid k-tuples in the window whose values are within ``sc.eps``.

    Values are bucketed on an ``eps`` lattice; only tuples inside one
    ``3^d`` bucket neighbourhood are examined, which loses nothing because
    points within ``eps`` differ by at most one bucket per coordinate.
    Hits are sorted by node tuple.
    """
    fl = _field_list(fields, sc)
    grid = fl[0].grid
    check_resolution(grid, sc)
    idx, pts = _window_nodes(grid, sc.window)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape) if len(idx) else np.zeros(0, int)
    vals = [f.values.reshape(-1, f.spec.d)[flat] for f in fl]
    k = sc.cfg.k

    if sc.mode == "self":
        pairs = _candidate_pairs(vals[0], vals[0], sc.eps, same=True)
        p, q = pairs[:, 0], pairs[:, 1]
        ok = _pair_filter(idx[p], idx[q], pts[p], pts[q], vals[0][p], vals[0][q], sc)
        pairs = pairs[ok]
        cliques = map(tuple, pairs) if k == 2 else _cliques(pairs, len(idx), k)
        hits = [_make_hit(tuple((0, int(c)) for c in clique), [idx], [pts], vals)
                for clique in cliques
                if _tuple_ok([idx[c] for c in clique], sc, ordered=False)]
    else:
        edges = {}
        for a, b in itertools.combinations(range(k), 2):
            pr = _candidate_pairs(vals[a], vals[b], sc.eps, same=False)
            p, q = pr[:, 0], pr[:, 1]
            ok = _pair_filter(idx[p], idx[q], pts[p], pts[q], vals[a][p], vals[b][q], sc)
            edges[(a, b)] = pr[ok]
        hits = []
        for combo in _layered_cliques(edges, k):
            tup = [idx[c] for c in combo]
            if _tuple_ok(tup, sc, ordered=True):
                hits.append(_make_hit(tuple(enumerate(combo)), [idx] * k, [pts] * k, vals))
    hits.sort(key=lambda h: h.nodes)
    return hits


def _cliques(pairs, n, k):
    """k-cliques (sorted vertex tuples) of an undirected graph given by pairs."""
    nbrs = [set() for _ in range(n)]
    for a, b in pairs:
        a, b = int(a), int(b)
        lo, hi = min(a, b), max(a, b)
        nbrs[lo].add(hi)

    def extend(clique, cand):
        if len(clique) == k:
            yield tuple(clique)
            return
        for v in sorted(cand):
            yield from extend(clique + [v], cand & nbrs[v])

    for v in range(n):
        yield from extend([v], set(nbrs[v]))


def _layered_cliques(edges, k):
    """Tuples ``(n_0, ..., n_{k-1})`` with an edge between every layer pair."""
    adj = {key: {} for key in edges}
    for (a, b), pr in edges.items():
        for p, q in pr:
            adj[(a, b)].setdefault(int(p), set()).add(int(q))

    def extend(combo):
        m = len(combo)
        if m == k:
            yield tuple(combo)
            return
        cand = None
        for a in range(m):
            s = adj[(a, m)].get(combo[a], set())
            cand = s if cand is None else cand & s
            if not cand:
                return
        for v in sorted(cand):
            yield from extend(combo + [v])

    starts = sorted(adj[(0, 1)]) if k >= 2 else []
    for v in starts:
        yield from extend([v])


def brute_force_multiples(fields, sc):
    """Reference search: every k-tuple of window nodes, checked directly."""
    fl = _field_list(fields, sc)
    grid = fl[0].grid
    idx, pts = _window_nodes(grid, sc.window)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape) if len(idx) else np.zeros(0, int)
    vals = [f.values.reshape(-1, f.spec.d)[flat] for f in fl]
    k = sc.cfg.k
    n = len(idx)
    if k == 2:
        return _brute_pairs(idx, pts, vals, sc)
    if sc.mode == "self":
        combos = (tuple((0, c) for c in cs) for cs in itertools.combinations(range(n), k))
    else:
        combos = (tuple(enumerate(cs)) for cs in itertools.product(range(n), repeat=k))
    hits = []
    for members in combos:
        nodes = [idx[c] for _, c in members]
        ps = [pts[c] for _, c in members]
        vs = [vals[f][c] for f, c in members]
        if not all(_separated(a, b, sc.delta) for a, b in itertools.combinations(ps, 2)):
            continue
        if any(_dist(a, b) > sc.eps for a, b in itertools.combinations(vs, 2)):
            continue
        if sc.constraint == "distinct":
            if any(np.any(a == b) for a, b in itertools.combinations(nodes, 2)):
                continue
        elif not _tuple_ok(nodes, sc, ordered=sc.mode == "independent"):
            continue
        hits.append(_make_hit(members, [idx] * len(vals), [pts] * len(vals), vals))
    hits.sort(key=lambda h: h.nodes)
    return hits


def _brute_pairs(idx, pts, vals, sc):
    """All-pairs scan via full distance matrices (k = 2)."""
    va, vb = vals[0], vals[-1]
    sep = _separated(pts[:, None], pts[None], sc.delta)
    close = _dist(va[:, None], vb[None]) <= sc.eps
    ok = sep & close
    if sc.constraint == "distinct":
        ok &= np.all(idx[:, None] != idx[None], axis=-1)
    else:
        l = sc.shared[2]
        ok &= idx[:, None, l] == idx[None, :, l]
    if sc.mode == "self":
        ok = np.triu(ok, 1)
    f_b = 0 if sc.mode == "self" else 1
    hits = [_make_hit(((0, int(p)), (f_b, int(q))), [idx] * 2, [pts] * 2, [va, vb])
            for p, q in zip(*np.nonzero(ok))]
    hits.sort(key=lambda h: h.nodes)
    return hits


def check_hit(hit, sc):
    """Re-verify separation, spread and constraint of a returned hit."""
    ps = [np.asarray(p) for p in hit.params]
    vs = [np.asarray(v) for v in hit.values]
    sep = all(_separated(a, b, sc.delta) for a, b in itertools.combinations(ps, 2))
    close = all(_dist(a, b) <= sc.eps for a, b in itertools.combinations(vs, 2))
    if sc.constraint == "distinct":
        cons = all(np.all(a != b) for a, b in itertools.combinations(hit.nodes, 2))
    else:
        cons = _tuple_ok(hit.nodes, sc, ordered=sc.mode == "independent")
    return sep and close and cons


# -- dyadic covering of the shared-coordinate slice ----------------------------

@dataclass(frozen=True)
class CoveringResult:
    n: int
    count: int
    free_dims: int
    target_level: int
    resolved_level: int

    @property
    def exact(self):
        """True when every ambiguous cell was refined down to side ``2^-2n``."""
        return self.resolved_level == self.target_level


def _slice_layout(sc):
    """Map each (point, axis) slot to a free coordinate index."""
    k, N = sc.cfg.k, sc.cfg.N
    i, j, l = sc.shared
    layout = np.full((k, N), -1)
    free = 0
    for p in range(k):
        for a in range(N):
            if p == j and a == l:
                continue
            layout[p, a] = free
            free += 1
    layout[j, l] = layout[i, l]
    return layout, free


def covering_count(n, sc, max_cells=2**21, cap=2**128):
    """Number of side-``2^-2n`` dyadic boxes covering the shared-coordinate slice.

    The slice is ``{t in [delta, K]^{Nk}: t^i_l = t^j_l, pairwise separation
    >= delta}`` with ``K = sc.window[1]``, parameterized by its ``kN - 1``
    free coordinates.  Cells of a dyadic tree over ``[0, 2^ceil(log2 K)]``
    are classified with interval bounds on coordinates and pairwise
    distances: cells inside count all their fine descendants, cells outside
    are dropped, and ambiguous cells are split.  When splitting would exceed
    ``max_cells`` live cells, the remaining ambiguous cells are counted whole,
    which still yields a cover.  For ``N = 1`` the sharing pair coincides on
    the slice, so its separation is not imposed.
    """
    if sc.shared is None:
        raise ValueError("covering_count needs a ('shared', i, j, l) constraint")
    if n < 1:
        raise ValueError("n must be a positive integer")
    k, N = sc.cfg.k, sc.cfg.N
    delta, K = sc.delta, sc.window[1]
    layout, m = _slice_layout(sc)
    root = 2.0 ** math.ceil(math.log2(K))
    target = int(round(math.log2(root))) + 2 * n
    analytic = (K - delta) ** m * 2.0 ** (2 * n * m)
    if analytic > cap:
        raise CountOverflow(f"covering count near {analytic:.3g} exceeds cap {cap:.3g}", analytic)
    i_sh, j_sh = sc.shared[0], sc.shared[1]
    pairs = [(a, b) for a, b in itertools.combinations(range(k), 2)
             if not (N == 1 and (a, b) == (i_sh, j_sh))]
    cells = np.zeros((1, m), dtype=np.int64)
    count = 0
    level = 0
    while True:
        side = root / 2.0 ** level
        lo = cells * side
        hi = lo + side
        plo, phi = lo[:, layout], hi[:, layout]  # (c, k, N)
        inside = np.all(plo >= delta, axis=(1, 2)) & np.all(phi <= K, axis=(1, 2))
        outside = np.any(phi < delta, axis=(1, 2)) | np.any(plo > K, axis=(1, 2))
        # distance bounds over the part of the cell inside [delta, K]
        plo, phi = np.maximum(plo, delta), np.minimum(phi, K)
        for a, b in pairs:
            same = layout[a] == layout[b]
            gap = np.maximum(0.0, np.maximum(plo[:, a] - phi[:, b], plo[:, b] - phi[:, a]))
            span = np.maximum(phi[:, a] - plo[:, b], phi[:, b] - plo[:, a])
            gap = np.where(same, 0.0, gap)
            span = np.where(same, 0.0, span)
            dmin = np.sqrt(np.sum(gap ** 2, axis=1))
            dmax = np.sqrt(np.sum(span ** 2, axis=1))
            inside &= dmin >= delta
            outside |= dmax < delta
        ambiguous = ~inside & ~outside
        per_cell = 2 ** (m * (target - level))
        count += int(np.count_nonzero(inside)) * per_cell
        amb = cells[ambiguous]
        if level == target or len(amb) * 2 ** m > max_cells:
            count += len(amb) * per_cell
            if count > cap:
                raise CountOverflow(f"covering count {count} exceeds cap", analytic)
            return CoveringResult(n, count, m, target, level)
        kids = np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int64)
        cells = (2 * amb[:, None, :] + kids[None]).reshape(-1, m)
        level += 1


def covering_slope(ns, sc, **opts):
    """Least-squares slope of ``log2 covering_count`` against ``n``."""
    logs = [math.log2(covering_count(n, sc, **opts).count) for n in ns]
    return float(np.polyfit(np.asarray(ns, dtype=float), logs, 1)[0])


# -- covariance determinants of separated tuples ---------------------------------

@dataclass(frozen=True)
class DensityReport:
    candidates: int
    admissible: int
    min_det_values: float
    min_det_increments: object
    min_det_pinned: float
    argmin: tuple
    dyadic_level: int


def tuple_determinants(tuples, level=None):
    """Determinants attached to parameter tuples of shape ``(k, N)``.

    Returns ``(values, increments, pinned)``: the determinant of the
    covariance of ``(B(t^1), ..., B(t^k))`` for a scalar sheet, of the
    consecutive-increment vector (``None`` when ``k = 1``), and, when
    ``level`` is given, of the corner-interpolated vector whose component
    ``i`` is the conditional mean of ``B(t^i)`` given the corners of the
    dyadic cell of side ``2^-level`` containing ``t^i``.
    """
    t = np.asarray(tuples, dtype=float)
    k, N = t.shape
    C = covariance_matrix(t)
    dv = float(np.linalg.det(C))
    if k > 1:
        A = np.eye(k)[:-1] - np.eye(k, k, 1)[:-1]
        di = float(np.linalg.det(A @ C @ A.T))
    else:
        di = None
    if level is None:
        return dv, di, None
    side = 2.0 ** -level
    rows, corners = [], []
    for i, ti in enumerate(t):
        lo = np.floor(ti / side) * side
        box = pinning.Box(lo, lo + side)
        rows.append(pinning.weight_matrix(box, ti[None], "full")[0])
        corners.append(pinning.corner_points(box, "full"))
    c = np.vstack(corners)
    W = np.zeros((k, len(c)))
    m = len(rows[0])
    for i, r in enumerate(rows):
        W[i, i * m:(i + 1) * m] = r
    dp = float(np.linalg.det(W @ covariance_matrix(c) @ W.T))
    return dv, di, dp


def dyadic_level_for(delta, N):
    """Smallest ``n`` with ``2^-n < delta / (3 sqrt N)``."""
    n = 0
    while 2.0 ** -n >= delta / (3 * math.sqrt(N)):
        n += 1
    return n


def density_lower_bound(sc, trials, rng):
    """Minimum covariance determinants over random separated tuples.

    ``trials`` candidate tuples are drawn uniformly from ``[0, K]^{Nk}``
    (``K = sc.window[1]``); those with every coordinate ``>= delta`` and
    pairwise distance ``>= delta`` are admissible.  The candidates do not
    depend on ``delta``, so with a fixed seed, halving ``delta`` enlarges the
    admissible set and can only lower the reported minima.
    """
    k, N = sc.cfg.k, sc.cfg.N
    delta, K = sc.delta, sc.window[1]
    level = dyadic_level_for(delta, N)
    cand = rng.uniform(0.0, K, size=(trials, k, N))
    ok = np.all(cand >= delta, axis=(1, 2))
    for a, b in itertools.combinations(range(k), 2):
        ok &= _dist(cand[:, a], cand[:, b]) >= delta
    best = [np.inf, np.inf, np.inf]
    arg = None
    for t in cand[ok]:
        dv, di, dp = tuple_determinants(t, level)
        if dv < best[0]:
            best[0], arg = dv, tuple(map(tuple, t.tolist()))
        best[1] = min(best[1], di)
        best[2] = min(best[2], dp)
    return DensityReport(trials, int(ok.sum()), best[0], best[1], best[2], arg, level)


# -- Monte Carlo phase probabilities ---------------------------------------------

@dataclass(frozen=True)
class PhaseRow:
    N: int
    d: int
    k: int
    regime: str
    eps: float
    trials: int
    hits: int
    estimate: float
    wilson_lo: float
    wilson_hi: float
    seed: int

    def as_tuple(self):
        return tuple(getattr(self, c) for c in PHASE_COLUMNS)


def min_spread(fields, sc):
    """Smallest spread among hits at ``sc.eps`` (``inf`` when there are none)."""
    hits = find_near_multiples(fields, sc)
    return min((h.spread for h in hits), default=math.inf)


def _trial_spreads(args):
    sc, grid, seed, start, stop = args
    spec = SheetSpec(sc.cfg.N, sc.cfg.d)
    out = []
    n_fields = 1 if sc.mode == "self" else sc.cfg.k
    for trial in range(start, stop):
        fields = [FieldSample(spec, grid_values(grid, spec.d, substream(seed, trial, m)),
                              "grid", grid=grid, seed=seed)
                  for m in range(n_fields)]
        out.append(min_spread(fields, sc))
    return out


def trial_spreads(sc, trials, seed, grid, jobs=1):
    """Per-trial minimum spread at the largest search tolerance ``sc.eps``.

    Trial ``i`` draws field ``m`` from substream ``(seed, i, m)``, so the
    result does not depend on ``jobs``.
    """
    check_resolution(grid, sc)
    if jobs <= 1 or trials < 2:
        return np.asarray(_trial_spreads((sc, grid, seed, 0, trials)))
    bounds = np.linspace(0, trials, min(jobs, trials) + 1).astype(int)
    chunks = [(sc, grid, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_trial_spreads, chunks))
    return np.concatenate([np.asarray(p) for p in parts])


def mc_phase_probability(sc, eps_ladder, trials, seed, grid, jobs=1):
    """Estimate ``P{some near-multiple point within eps}`` along an eps ladder.

    One search at the largest ``eps`` per trial gives the minimal spread,
    and the event for each smaller ``eps`` is ``spread <= eps``; the
    estimates are therefore nonincreasing as ``eps`` decreases.
    """
    ladder = [float(e) for e in eps_ladder]
    if any(e < 0 for e in ladder):
        raise ValueError("eps must be nonnegative")
    top = max(ladder)
    run = SearchConfig(sc.cfg, sc.window, sc.delta, top, sc.mode, sc.constraint)
    spreads = trial_spreads(run, trials, seed, grid, jobs)
    regime = classify_regime(sc.cfg).regime
    rows = []
    for e in ladder:
        hits = int(np.count_nonzero(spreads <= e))
        lo, hi = wilson_interval(hits, trials)
        rows.append(PhaseRow(sc.cfg.N, sc.cfg.d, sc.cfg.k, regime, e, trials, hits,
                             hits / trials, lo, hi, seed))
    return rows


# -- hitting probability against capacity --------------------------------------

@dataclass(frozen=True)
class HittingReport:
    probability: float
    wilson: tuple
    hits: int
    trials: int
    capacity: float
    ratio: object
    capacity_converged: bool

    @property
    def is_sentinel(self):
        return self.ratio is None


def hitting_probability(d, box_lower, box_upper, atoms, h, grid, trials, seed):
    """MC estimate that the sheet on grid nodes inside a box visits a lattice set.

    The target is the union of the closed-open cells ``[h q, h (q + 1))``
    whose centres are ``atoms``.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    if atoms.size == 0:
        return 0, trials
    lo_b, hi_b = np.asarray(box_lower, float), np.asarray(box_upper, float)
    pts = grid.nodes()
    tol = 1e-12
    sel = np.flatnonzero(np.all((pts >= lo_b - tol) & (pts <= hi_b + tol), axis=1))
    keys = np.floor(atoms / h).astype(np.int64)
    kmin = keys.min(axis=0)
    base = keys.max(axis=0) - kmin + 1
    mult = np.concatenate([[1], np.cumprod(base[:-1])]).astype(np.int64)
    targets = np.sort((keys - kmin) @ mult)
    hits = 0
    for trial in range(trials):
        v = grid_values(grid, d, substream(seed, trial)).reshape(-1, d)[sel]
        q = np.floor(v / h).astype(np.int64) - kmin
        inb = np.all((q >= 0) & (q < base), axis=1)
        if np.isin(q[inb] @ mult, targets).any():
            hits += 1
    return hits, trials


def khosh_shi_comparison(N, d, box_lower, box_upper, atoms, h, grid, trials, seed,
                         capacity_opts=None):
    """Hitting probability of a lattice set and its ratio to ``Cap_{d-2N}``."""
    if not d > 2 * N:
        raise DomainError(f"need d > 2N, got N={N}, d={d}")
    atoms = np.asarray(atoms, dtype=float)
    if atoms.size == 0:
        return HittingReport(0.0, (0.0, 0.0), 0, trials, 0.0, None, True)
    hits, n = hitting_probability(d, box_lower, box_upper, atoms, h, grid, trials, seed)
    cap = capacity_details(d - 2 * N, atoms, h, **(capacity_opts or {}))
    p = hits / n
    ratio = p / cap.capacity if cap.capacity > 0 else None
    return HittingReport(p, wilson_interval(hits, n), hits, n, cap.capacity, ratio,
                         bool(cap.converged))
