"""End-to-end acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line in ``RESULTS``; the lines are
printed in the pytest terminal summary and when the module is run as a
script (``python tests/test_acceptance.py``).
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from uglyduckling.divergence import ProblemSpec, default_delta_grid, script_V, solve_V
from uglyduckling.experiment import (
    ExperimentConfig,
    emit_outputs,
    records_csv,
    run_experiment,
)
from uglyduckling.prob import bhattacharyya
from uglyduckling.spine import Status, identify
from uglyduckling.tree import observe, simulate_gw, simulate_sst

sys.path.insert(0, str(Path(__file__).parent))
from oracles import brute_force_two_point  # noqa: E402

MU_SUB, F_SUB = (0.35, 0.4, 0.25), (0, 1, 3)
MU_CRIT, F_CRIT = (0.3, 0.4, 0.3), (0, 1, 3)
MU_SUP, F_SUP = (0.29, 0.4, 0.31), (0, 1, 4)

RESULTS: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str):
    RESULTS[number] = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
    print(RESULTS[number])
    assert ok, RESULTS[number]


def random_pair(rng, n):
    return rng.dirichlet(np.ones(n + 1)), rng.dirichlet(np.ones(n + 1))


def cli(*args, timeout=120):
    return subprocess.run(
        [sys.executable, "-m", "uglyduckling.cli", *args],
        capture_output=True,
        text=True,
        timeout=timeout,
    )


class TestAcceptance:
    def test_1_criterion_values(self):
        rows = []
        ok = True
        for mu, f, target in (("0.35,0.4,0.25", "0,1,3", -0.115), ("0.29,0.4,0.31", "0,1,4", -0.006)):
            t0 = time.perf_counter()
            proc = cli("criterion", "--mu", mu, "--f", f)
            dt = time.perf_counter() - t0
            value = json.loads(proc.stdout)["value"] if proc.returncode == 0 else float("nan")
            ok &= proc.returncode == 0 and abs(value - target) <= 0.005 and dt < 30
            rows.append(f"K={value:.6f} (target {target}) in {dt:.1f}s")
        record(1, "criterion reproduction", ok, "; ".join(rows))

    def test_2_closed_form_oracle(self):
        rng = np.random.default_rng(2)
        worst_val = worst_pt = 0.0
        for k in range(20):
            p, q = random_pair(rng, 1 + k % 6)
            rep = solve_V(ProblemSpec(p, q, alpha=0.0, epsilon=0.0))
            g = np.sqrt(p * q)
            g /= g.sum()
            worst_val = max(worst_val, abs(rep.objective - bhattacharyya(p, q)))
            worst_pt = max(worst_pt, np.abs(rep.x - g).sum(), np.abs(rep.y - g).sum())
        ok = worst_val <= 1e-6 and worst_pt <= 1e-6
        record(2, "closed-form oracle", ok, f"max |V - d_B| = {worst_val:.2e}, max L1 point error = {worst_pt:.2e}")

    def test_3_bhattacharyya_limit(self):
        rng = np.random.default_rng(3)
        grid = default_delta_grid()
        ok = True
        worst_rel = worst_band = worst_grid = 0.0
        for k in range(5):
            p, q = random_pair(rng, 1 + k % 4)
            db = bhattacharyya(p, q)
            rates = {}
            for a in (0.5, 0.9, 0.99):
                rep = solve_V(ProblemSpec(p, q, alpha=a))
                ok &= rep.converged
                rates[a] = rep.objective / (1 - a)
            rel = abs(rates[0.99] - db) / db
            worst_rel = max(worst_rel, rel)
            lowest = min(rates.values())
            band = max((r - db * 1.05) for r in rates.values())
            worst_band = max(worst_band, band / db)
            ok &= rel <= 0.05 and band <= 0 and all(r >= lowest for r in rates.values())
            vals = np.array([script_V(p, q, d) for d in grid])
            worst_grid = max(worst_grid, float((vals - db).max()))
            ok &= bool(np.all(vals <= db + 1e-8))
        record(
            3,
            "limit v(a)/(1-a) -> d_B",
            ok,
            f"max rel. gap at 0.99 = {worst_rel:.3%}, max excess over 1.05 d_B = {worst_band:.2e}, "
            f"max grid V - d_B = {worst_grid:.2e}",
        )

    def test_4_brute_force(self):
        rng = np.random.default_rng(4)
        worst = 0.0
        for k in range(10):
            p, q = random_pair(rng, 1)
            for delta in (0.0, 1.0, 10.0):
                alpha = delta / (1 + delta)
                rep = solve_V(ProblemSpec(p, q, alpha=alpha))
                worst = max(worst, abs(rep.objective - brute_force_two_point(p, q, alpha)))
        record(4, "brute-force equivalence", worst <= 1e-3, f"max |solver - grid| = {worst:.2e} over 30 solves")

    def test_5_many_to_one(self):
        t0 = time.perf_counter()
        n = 200_000
        t = simulate_gw(MU_SUB, 3, seed=5, n_roots=n)
        r = t.nodes_at_depth(3)
        a2 = t.parent[np.arange(r.start, r.stop)]
        a1 = t.parent[a2]
        a0 = t.parent[a1]
        hit = (t.n_children[a0] == 1) & (t.n_children[a1] == 1) & (t.n_children[a2] == 1)
        per_tree = np.bincount(a0[hit], minlength=n)
        est = per_tree.mean()
        se = per_tree.std(ddof=1) / np.sqrt(n)
        dt = time.perf_counter() - t0
        exact = 0.9**3 * (0.4 / 0.9) ** 3
        stated = 0.063927
        ok = abs(est - exact) <= 4 * se and abs(est - stated) <= 4 * se and dt < 60
        record(
            5,
            "many-to-one",
            ok,
            f"estimate {est:.6f} +- {se:.6f}; exact {exact:.6f} ({abs(est - exact) / se:.2f} SE), "
            f"stated 0.063927 ({abs(est - stated) / se:.2f} SE); {dt:.1f}s",
        )

    def test_6_identification_soundness(self):
        errors = checked = 0
        regimes = ((MU_SUB, F_SUB), (MU_CRIT, F_CRIT), (MU_SUP, F_SUP))
        for k in range(200):
            mu, f = regimes[k % 3]
            h = 5 + k % 26
            tree = simulate_sst(mu, f, h, seed=10_000 + k)
            obs = observe(tree, h)
            rep = identify(obs)
            truth = tree.special[: obs.n_observed]
            errors += int(np.sum(truth[rep.status == Status.NORMAL]))
            errors += int(np.sum(~truth[rep.status == Status.SPECIAL]))
            checked += int(np.sum(rep.status != Status.UNKNOWN))
        record(6, "identification soundness", errors == 0, f"{errors} errors over {checked} labelled nodes in 200 trees")

    def test_7_consistency_trends(self):
        t0 = time.perf_counter()
        cfg = ExperimentConfig(mu=MU_SUB, f=F_SUB, h_max=125, replicates=50, master_seed=0)
        res = run_experiment(cfg, compute_criterion=False)
        dt = time.perf_counter() - t0
        agg = {row["h"]: row for row in res.aggregate}
        lo, hi = agg[25], agg[125]
        ms = (hi["median_err_mu_star"], lo["median_err_mu_star"])
        fn = (hi["median_err_f_norm"], lo["median_err_f_norm"])
        sp = (hi["median_err_spine"], lo["median_err_spine"])
        kh = hi["mean_k_h"] / 125
        ok = ms[0] <= 0.5 * ms[1] and fn[0] <= 0.5 * fn[1] and sp[0] < sp[1] and kh > 0.9 and dt < 600
        record(
            7,
            "consistency trends",
            ok,
            f"median mu* err {ms[0]:.4f} vs {ms[1]:.4f}, median f err {fn[0]:.4f} vs {fn[1]:.4f}, "
            f"median spine err {sp[0]:.4f} vs {sp[1]:.4f}, mean K_h/h {kh:.4f}; {dt:.0f}s",
        )

    def test_8_determinism(self, tmp_path):
        blobs = {}
        for label, workers in (("a", 1), ("b", 1), ("c", 2), ("d", 3)):
            cfg = ExperimentConfig(
                mu=MU_SUB, f=F_SUB, h_max=60, replicates=6, master_seed=8, workers=workers,
                output_dir=str(tmp_path / label),
            )
            res = run_experiment(cfg, compute_criterion=False)
            emit_outputs(res.records, res.aggregate, cfg, plot=False)
            blobs[label] = (tmp_path / label / "records.csv").read_bytes()
        ok = len(set(blobs.values())) == 1
        record(8, "determinism", ok, f"{len(set(blobs.values()))} distinct records.csv over runs with 1, 1, 2, 3 workers")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    print()
    for k in sorted(RESULTS):
        print(RESULTS[k])
    sys.exit(code)
