"""Near-double-point probabilities for N = 1, k = 2 over a range of d.

Prints one row per (mode, d, eps) with the Wilson interval, so the drop
across the critical dimension d = 4 can be read off directly.

    python3 scripts/phase_table.py [--trials 200] [--seed 0] [--jobs J]
"""

import argparse

from sheetlab.capacity import RegimeConfig
from sheetlab.multipoints import SearchConfig, mc_phase_probability
from sheetlab.sheet import GridSpec


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    args = ap.parse_args(argv)
    grid = GridSpec([2.0], [128])
    print(f"{'mode':<12}{'d':>3} {'regime':<14}{'eps':>6}{'estimate':>10}  wilson")
    for mode in ("self", "independent"):
        for d in args.dims:
            sc = SearchConfig(RegimeConfig(1, d, 2), (0.5, 2.0), 0.1, max(args.eps), mode)
            for r in mc_phase_probability(sc, args.eps, args.trials, args.seed, grid, args.jobs):
                print(f"{mode:<12}{d:>3} {r.regime:<14}{r.eps:>6}{r.estimate:>10.3f}  "
                      f"[{r.wilson_lo:.3f}, {r.wilson_hi:.3f}]")


if __name__ == "__main__":
    main()
