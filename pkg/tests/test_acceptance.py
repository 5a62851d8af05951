"""Acceptance suite: each shipped config, run at full scale, against its stated bounds.

Every test appends one ``ACCEPTANCE <n> PASS|FAIL ...`` line, printed in the
terminal summary.
"""

import csv
import json
import time
from pathlib import Path


from sheetlab import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run_config(name, tmp_path):
    raw = json.loads((CONFIGS / f"{name}.json").read_text())
    cfg = cli.resolve_config(raw, out=str(tmp_path / name))
    start = time.perf_counter()
    code, _ = cli.run(cfg, echo=False)
    elapsed = time.perf_counter() - start
    out = Path(cfg["out"])
    summary = json.loads((out / "summary.json").read_text()) if code != 1 else {}
    return code, elapsed, out, summary, cfg


def table(out, name):
    with open(out / f"{name}.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def judged(n, title, acceptance_log):
    """Decorator-free context: log PASS/FAIL for criterion ``n`` around a check."""

    class _Ctx:
        detail = ""

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            verdict = "PASS" if exc_type is None else "FAIL"
            note = self.detail if exc_type is None else f"{exc_type.__name__}: {exc}"
            acceptance_log.append(f"ACCEPTANCE {n} {verdict} {title}: {note}".splitlines()[0])
            return False

    return _Ctx()


def test_criterion_1_pinning_identities(tmp_path, acceptance_log):
    with judged(1, "pinning identities", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("01_pinning_identities", tmp_path)
        rows = table(out, "identities")
        assert code == 0, summary.get("failures")
        assert cfg["trials"] >= 10_000
        assert {int(r["N"]) for r in rows} == {1, 2, 3, 4, 5}
        assert {r["mode"] for r in rows} == {"full", "lower-face"}
        assert sum(int(r["trials"]) for r in rows) // 2 >= 10_000
        assert max(float(r["max_residual"]) for r in rows) <= 1e-12
        assert max(float(r["max_weight_sum_error"]) for r in rows) <= 1e-12
        assert min(float(r["min_weight"]) for r in rows) >= 0
        assert secs < 10
        j.detail = f"max residual {summary['summary']['max_residual']:.2e}, {secs:.1f}s"


def test_criterion_2_pinning_oracle(tmp_path, acceptance_log):
    with judged(2, "conditioning oracle", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("02_pinning_oracle", tmp_path)
        rows = table(out, "oracle")
        assert code == 0, summary.get("failures")
        assert sum(int(r["instances"]) for r in rows) >= 1000
        assert max(int(r["N"]) for r in rows) <= 4
        worst = max(float(r["max_abs_difference"]) for r in rows)
        assert worst <= 1e-10
        assert secs < 30
        j.detail = f"max |diff| {worst:.2e}, {secs:.1f}s"


def test_criterion_3_girsanov_telescoping(tmp_path, acceptance_log):
    with judged(3, "drift telescoping", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("03_girsanov_telescoping", tmp_path)
        rows = table(out, "telescoping")
        assert code == 0, summary.get("failures")
        assert sum(int(r["families"]) for r in rows) >= 1000
        assert max(int(r["N"]) for r in rows) <= 4 and max(int(r["k"]) for r in rows) <= 4
        worst = max(float(r["max_error"]) for r in rows)
        assert worst <= 1e-12
        assert max(float(r["max_below_level"]) for r in rows) == 0.0
        assert secs < 60
        j.detail = f"max error {worst:.2e}, drift below level exactly 0, {secs:.1f}s"


def test_criterion_4_decoupling_independence(tmp_path, acceptance_log):
    with judged(4, "decoupling independence", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("04_girsanov_independence", tmp_path)
        rows = table(out, "independence")
        assert code == 0, summary.get("failures")
        assert cfg["trials"] >= 100_000
        z = max(abs(float(r["z_decoupled"])) for r in rows)
        assert z <= 5.0
        # the raw sheet is visibly correlated, so the test has power
        assert max(abs(float(r["z_raw"])) for r in rows) > 5.0
        assert secs < 300
        j.detail = f"max |z| {z:.2f} over {len(rows)} pairs, {secs:.1f}s"


def test_criterion_5_sampler_equivalence(tmp_path, acceptance_log):
    with judged(5, "grid vs exact sampler", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("05_sampler_equivalence", tmp_path)
        rows = table(out, "sampler")
        assert code == 0, summary.get("failures")
        assert cfg["trials"] >= 100_000
        assert summary["summary"]["nodes"] == 20
        assert len(rows) == 20 * 21 // 2
        z = max(abs(float(r["z"])) for r in rows)
        assert z <= 5.0
        assert secs < 300
        j.detail = f"max |z| {z:.2f} over 210 entries, {secs:.1f}s"


def test_criterion_6_density(tmp_path, acceptance_log):
    with judged(6, "density lower bound", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("06_density", tmp_path)
        rows = table(out, "determinants")
        assert code == 0, summary.get("failures")
        base = {(int(r["N"]), int(r["k"])): r for r in rows if float(r["delta"]) == 0.1}
        assert set(base) == {(2, 2), (3, 3)}
        for r in base.values():
            assert float(r["K"]) == 2.0
            assert int(r["admissible"]) >= 10_000
            assert float(r["min_det_values"]) > 0
            assert float(r["min_det_increments"]) > 0
            assert float(r["min_det_pinned"]) > 0
        assert secs < 120
        j.detail = (f"min det {float(base[(2, 2)]['min_det_values']):.2e} / "
                    f"{float(base[(3, 3)]['min_det_values']):.2e}, {secs:.1f}s")


def test_criterion_7_covering(tmp_path, acceptance_log):
    with judged(7, "covering exponent", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("07_covering", tmp_path)
        slopes = table(out, "slopes")
        counts = table(out, "counts")
        critical = table(out, "critical")
        assert code == 0, summary.get("failures")
        assert {(int(r["k"]), int(r["N"])) for r in slopes} == {(2, 1), (2, 2), (3, 2)}
        assert sorted({int(r["n"]) for r in counts}) == [3, 4, 5, 6, 7]
        for r in slopes:
            assert abs(float(r["slope"]) - 2 * (int(r["k"]) * int(r["N"]) - 1)) <= 0.1
        assert critical
        for r in critical:
            N, d, k = int(r["N"]), int(r["d"]), int(r["k"])
            assert N <= 4 and (k - 1) * d == 2 * k * N
            assert d * (k - 1) - 2 * (k * N - 1) == 2
        assert secs < 60
        j.detail = ("slopes " + ", ".join(f"{float(r['slope']):.3f}" for r in slopes)
                    + f"; {len(critical)} critical triples, {secs:.1f}s")


def test_criterion_8_capacity(tmp_path, acceptance_log):
    with judged(8, "capacity behaviour", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("08_capacity", tmp_path)
        rows = table(out, "estimates")
        assert code == 0, summary.get("failures")
        spans = []
        for d in (1, 2, 3):
            mine = [r for r in rows if int(r["d"]) == d]
            crit = [float(r["capacity"]) for r in mine if float(r["beta"]) == d]
            sub = [float(r["capacity"]) for r in mine if float(r["beta"]) == d - 1]
            neg = [float(r["capacity"]) for r in mine if float(r["beta"]) < 0]
            assert len(crit) >= 4 and len(sub) >= 4
            assert all(a > b for a, b in zip(crit, crit[1:]))
            spans.append(max(sub) / min(sub) - 1)
            assert spans[-1] <= 0.15
            assert neg and all(c == 1.0 for c in neg)
            assert all(r["converged"] == "true" for r in mine)
        assert secs < 300
        j.detail = f"beta=d-1 spreads {', '.join(f'{s:.3f}' for s in spans)}, {secs:.1f}s"


def test_criterion_9_phase_ordering(tmp_path, acceptance_log):
    with judged(9, "phase ordering", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("09_phase_ordering", tmp_path)
        assert code == 0, summary.get("failures")
        assert cfg["trials"] >= 1000
        notes = []
        for mode in ("self", "independent"):
            rows = table(out, f"phase_{mode}")
            sub = {float(r["eps"]): r for r in rows if (r["N"], r["d"], r["k"]) == ("1", "2", "2")}
            sup = {float(r["eps"]): r for r in rows if (r["N"], r["d"], r["k"]) == ("1", "5", "2")}
            assert set(sub) == set(sup) == {0.2, 0.1, 0.05}
            for e in sub:
                assert float(sup[e]["estimate"]) < float(sub[e]["estimate"])
                assert float(sup[e]["wilson_hi"]) < float(sub[e]["wilson_lo"])
            notes.append(f"{mode} {float(sub[0.05]['estimate']):.3f}>"
                         f"{float(sup[0.05]['estimate']):.3f}")
        assert secs < 600
        j.detail = f"at eps=0.05 {'; '.join(notes)}, {secs:.1f}s"


def test_criterion_10_search_oracle(tmp_path, acceptance_log):
    with judged(10, "search oracle", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("10_search_oracle", tmp_path)
        rows = table(out, "search_oracle")
        assert code == 0, summary.get("failures")
        assert len(rows) == 50
        assert all(int(r["nodes"]) <= 1000 for r in rows)
        assert all(r["equal"] == "true" and r["sound"] == "true" for r in rows)
        assert sum(int(r["hits_brute"]) > 0 for r in rows) >= 25
        assert secs < 120
        j.detail = f"50/50 instances equal, {secs:.1f}s"


def test_criterion_11_hitting(tmp_path, acceptance_log):
    with judged(11, "hitting vs capacity", acceptance_log) as j:
        code, secs, out, summary, cfg = run_config("11_hitting", tmp_path)
        rows = table(out, "hitting")
        assert code == 0, summary.get("failures")
        full = [r for r in rows if float(r["radius"]) == 1.0]
        assert len(full) >= 3
        ratios = [float(r["ratio"]) for r in full]
        assert all(r > 0 for r in ratios)
        assert max(ratios) / min(ratios) <= 3.0
        assert secs < 600
        j.detail = f"ratios {', '.join(f'{r:.3f}' for r in ratios)}, {secs:.1f}s"
