"""Acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see one PASS/FAIL line per
criterion. Thresholds are fixed here and never tuned to the outcome; the
simulation seed is 0 throughout.
"""
import re
import subprocess
import sys
import time
from pathlib import Path

import pytest

from sigcast.filters import steady_state_rates
from sigcast.pathbuild import TimeSeriesFrame, read_wide_csv
from sigcast.pipeline import evaluate, load_config, run_ar1_baseline, run_nowcast
from sigcast.simlab import SimConfig, compare_coefficients, run_regime

SEED = 0
ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "sigcast" / "data"

_reports = {}


def regime(name):
    if name not in _reports:
        t0 = time.perf_counter()
        rep = run_regime(SimConfig.for_regime(name, seed=SEED), name)
        _reports[name] = (rep, time.perf_counter() - t0)
    return _reports[name]


def within(x, centre, tol):
    return abs(x - centre) <= tol


def between(x, lo, hi):
    return lo <= x <= hi


def report(number, checks, detail=""):
    """Print one line for the criterion and fail listing the unmet checks."""
    failed = [name for name, ok in checks if not ok]
    status = "PASS" if not failed else "FAIL"
    line = f"CRITERION {number}: {status}"
    if detail:
        line += f"  {detail}"
    if failed:
        line += f"  unmet: {', '.join(failed)}"
    print("\n" + line)
    assert not failed, line


def test_criterion_1_regular_regime():
    rep, secs = regime("regular")
    checks = [
        ("kf mean in 0.02+-0.03", within(rep.kf_mean, 0.02, 0.03)),
        ("kf var in 0.12+-0.05", within(rep.kf_var, 0.12, 0.05)),
        ("sig mean in 0.02+-0.03", within(rep.sig_mean, 0.02, 0.03)),
        ("sig var in 0.14+-0.05", within(rep.sig_var, 0.14, 0.05)),
        ("slope in [0.95, 1.05]", between(rep.slope, 0.95, 1.05)),
        ("intercept in [-0.06, 0.02]", between(rep.intercept, -0.06, 0.02)),
        ("R2 >= 0.95", rep.r2 >= 0.95),
        ("runtime < 120 s", secs < 120.0),
        ("800/200 split", (rep.n_train, rep.n_test) == (800, 200)),
    ]
    report(1, checks, f"{rep.headline()} runtime={secs:.1f}s")


def test_criterion_2_subsampled_regime():
    rep, _ = regime("subsampled")
    checks = [
        ("slope in [0.85, 1.00]", between(rep.slope, 0.85, 1.00)),
        ("R2 >= 0.88", rep.r2 >= 0.88),
        ("kf var in 0.13+-0.05", within(rep.kf_var, 0.13, 0.05)),
        ("sig var in 0.14+-0.05", within(rep.sig_var, 0.14, 0.05)),
    ]
    report(2, checks, rep.headline())


def test_criterion_3_sigmoid_regime():
    rep, _ = regime("sigmoid")
    checks = [
        ("slope in [0.75, 0.95]", between(rep.slope, 0.75, 0.95)),
        ("R2 in [0.35, 0.65]", between(rep.r2, 0.35, 0.65)),
        ("sig var in 0.21+-0.07", within(rep.sig_var, 0.21, 0.07)),
    ]
    report(3, checks, rep.headline())


def test_criterion_4_sigmoid_subsampled_regime():
    rep, _ = regime("sigmoid-subsampled")
    checks = [
        ("R2 <= 0.25", rep.r2 <= 0.25),
        ("sig var <= 1.1 * 0.29", rep.sig_var <= 1.1 * 0.29),
    ]
    # informational: the same comparison against this run's own filter variance
    info = f"sig/kf variance ratio here={rep.sig_var / rep.kf_var:.2f}"
    report(4, checks, f"{rep.headline()} {info}")


def test_criterion_5_synthetic_benchmark():
    cfg = load_config(DATA / "synthetic.cfg")
    frame = TimeSeriesFrame(read_wide_csv(DATA / "synthetic_weekly.csv"), cfg.target,
                            cfg.target_lag)
    run = run_nowcast(frame, cfg)
    ours = evaluate(run)
    ar1 = evaluate(run_ar1_baseline(frame, run.table["time"]))
    checks = [
        ("sig RMSE < AR(1) RMSE", ours["rmse"] < ar1["rmse"]),
        ("same scored nowcasts", ours["n"] == ar1["n"] and ours["n"] > 0),
    ]
    report(5, checks, f"sig rmse={ours['rmse']:.4f} ar1 rmse={ar1['rmse']:.4f} n={ours['n']}")


PROPERTIES = {
    "Chen consistency": ["test_sigcore.py::test_chen_consistency",
                         "test_sigcore.py::test_chen_two_segments_matches_signature"],
    "reparameterization invariance": ["test_sigcore.py::test_reparameterization_invariance"],
    "translation invariance": ["test_sigcore.py::test_translation_invariance"],
    "factorial decay bound": ["test_sigcore.py::test_factorial_decay"],
    "shuffle identity": ["test_sigcore.py::test_shuffle_identity"],
    "quadrature oracle (1e-6)": ["test_sigcore.py::test_quadrature_oracle_small_path",
                                 "test_sigcore.py::test_quadrature_oracle_random_3_channel"],
    "KF vs Gaussian conditioning (1e-10)": ["test_filters.py::test_matches_gaussian_conditioning"],
    "Riccati residual (1e-10), R=1": ["test_filters.py::test_riccati_closed_forms"],
    "expansion error monotone in N at t=0.2": [
        "test_filters.py::test_expansion_converges_monotonically_at_t02"],
    "ridge vs closed form (1e-8)": ["test_regress.py::test_ridge_closed_form"],
    "elastic-net monotone descent": ["test_regress.py::test_objective_monotone_descent"],
    "pipeline no-leakage": ["test_pipeline.py::test_no_lookahead",
                            "test_pipeline.py::test_grid_ignores_test_targets"],
    "bit-determinism": ["test_pipeline.py::test_run_is_deterministic",
                        "test_simlab.py::test_run_regime_is_deterministic",
                        "test_cli.py::test_simulate_low_sample_and_repeatable"],
}


def test_criterion_6_property_suites():
    nodes = sorted({n for ns in PROPERTIES.values() for n in ns})
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-rA", "-p", "no:cacheprovider",
         *[f"tests/{n}" for n in nodes]],
        cwd=ROOT, capture_output=True, text=True)
    outcome = {}
    for m in re.finditer(r"^(PASSED|FAILED|ERROR) tests/(\S+?)(\[\S*\])?(?: |$)",
                         proc.stdout, re.M):
        node = m.group(2)
        outcome[node] = outcome.get(node, True) and m.group(1) == "PASSED"
    checks = []
    for prop, ns in PROPERTIES.items():
        ok = all(outcome.get(n, False) for n in ns)
        print(f"\n  property {prop}: {'PASS' if ok else 'FAIL'}", end="")
        checks.append((prop, ok))
    report(6, checks, f"{len(nodes)} test nodes")


def test_criterion_7_time_word_coefficients():
    diffs = {}
    for level, t_level in ((6, 6), (3, 1)):
        cfg = SimConfig.for_regime("regular", seed=SEED, level=level, t_level=t_level)
        rep = run_regime(cfg, "regular")
        a, gain = steady_state_rates(cfg.kb_params())
        d = compare_coefficients(rep.coefficients, a, level, y0=cfg.Y0, gain=gain)
        pure = [abs(v) for k, v in d.items() if set(k.split(",")) == {"t"}]
        diffs[(level, t_level)] = max(pure)
    hi, lo = diffs[(6, 6)], diffs[(3, 1)]
    checks = [("pure-time max diff ratio >= 10", hi >= 10 * lo)]
    report(7, checks, f"max|diff| t_level=6: {hi:.4g}, level 3/t_level=1: {lo:.4g}, "
                      f"ratio={hi / lo:.3g}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))
