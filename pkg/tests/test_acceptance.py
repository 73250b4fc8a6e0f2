"""Acceptance criteria, one test per criterion.

Statistical criteria run through the experiment runner with pinned seeds, so
every number below is reproducible byte for byte; the final criterion reruns
the same configurations under a different worker count and compares report
bytes.  Each test prints a one-line verdict.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from taxruin import (
    Constant,
    CramerLundberg,
    HarmonicRamp,
    Table,
    TwoSided,
    cramer_upsilon,
    esscher_tilt,
    ladder_exponents,
    laplace_exponent,
    lundberg_root,
    run_batch,
)
from taxruin.asymptotics import (
    joint_total_mass,
    predict_edpf,
    predict_ruin_ratio,
    q_consistency,
)
from taxruin.cli import ExperimentConfig, render_report_json, run_experiment
from taxruin.estimators import edpf

from pathwise import check_coupled_monotone, check_log_invariants

pytestmark = pytest.mark.acceptance

ALPHA = 1.0 / 3.0
CL_MODEL = {"type": "cl", "c": 1.5, "lam": 1.0, "mu": 1.0}
TS_MODEL = {"type": "two_sided", "c": 1.5, "lam": 1.0, "mu": 1.0,
            "lam_minus": 0.2, "mu_minus": 2.0}

CONFIGS = {
    "c1_no_tax_tilted": {
        "model": CL_MODEL,
        "policy": {"type": "constant", "gamma": 0.0},
        "u_grid": [2.0, 5.0, 10.0],
        "estimator": "tilted",
        "n": 100_000,
        "seed": 1001,
        "outputs": ["ruin"],
    },
    "c2_crude_g0": {
        "model": CL_MODEL,
        "policy": {"type": "constant", "gamma": 0.0},
        "u_grid": [1.0, 2.0],
        "estimator": "crude",
        "n": 100_000,
        "seed": 1002,
        "outputs": ["ruin"],
    },
    "c2_tilted_g0": {
        "model": CL_MODEL,
        "policy": {"type": "constant", "gamma": 0.0},
        "u_grid": [1.0, 2.0],
        "estimator": "tilted",
        "n": 10_000,
        "seed": 1003,
        "outputs": ["ruin"],
    },
    "c2_crude_g5": {
        "model": CL_MODEL,
        "policy": {"type": "constant", "gamma": 0.5},
        "u_grid": [1.0, 2.0],
        "estimator": "crude",
        "n": 100_000,
        "seed": 1004,
        "outputs": ["ruin"],
    },
    "c2_tilted_g5": {
        "model": CL_MODEL,
        "policy": {"type": "constant", "gamma": 0.5},
        "u_grid": [1.0, 2.0],
        "estimator": "tilted",
        "n": 10_000,
        "seed": 1005,
        "outputs": ["ruin"],
    },
    "c3_main": {
        "model": CL_MODEL,
        "policy": {"type": "constant", "gamma": 0.5},
        "u_grid": [15.0],
        "estimator": "tilted",
        "n": 100_000,
        "seed": 1006,
        "outputs": ["ruin", "ratio", "edpf", "tax", "joint", "diagnostic"],
        "penalty": {"lam": 2.0 / 3.0, "eta": 0.0, "delta": 0.0},
    },
    "c4a_ramp6": {
        "model": CL_MODEL,
        "policy": {"type": "example41", "beta": 6.0},
        "u_grid": [15.0],
        "estimator": "tilted",
        "n": 100_000,
        "seed": 1007,
        "outputs": ["ruin"],
        "slack_rel": {"ruin": 0.10},
    },
    "c4b_ramp3": {
        "model": CL_MODEL,
        "policy": {"type": "example41", "beta": 3.0},
        "u_grid": [5.0, 10.0, 15.0],
        "estimator": "crude",
        "n": 250_000,
        "seed": 1008,
        "outputs": ["ruin"],
        "truncation": {"hhat_cap": 15.0},
    },
    "c7b_discounted": {
        "model": CL_MODEL,
        "policy": {"type": "constant", "gamma": 0.5},
        "u_grid": [15.0],
        "estimator": "tilted",
        "n": 100_000,
        "seed": 1010,
        "discount": 0.1,
        "outputs": ["tax"],
    },
    "c7c_ramp9_tax": {
        "model": CL_MODEL,
        "policy": {"type": "example41", "beta": 9.0},
        "u_grid": [15.0],
        "estimator": "crude",
        "n": 250_000,
        "seed": 1011,
        "outputs": ["tax"],
        "truncation": {"hhat_cap": 40.0},
        "slack_rel": {"tax": 0.10},
    },
    "c8_diagnostic": {
        "model": CL_MODEL,
        "policy": {"type": "constant", "gamma": 0.5},
        "u_grid": [5.0, 10.0, 15.0],
        "estimator": "tilted",
        "n": 100_000,
        "seed": 1012,
        "outputs": ["diagnostic"],
    },
    "c11_two_sided": {
        "model": TS_MODEL,
        "policy": {"type": "constant", "gamma": 0.5},
        "u_grid": [12.0],
        "estimator": "tilted",
        "n": 100_000,
        "seed": 1013,
        "outputs": ["ratio"],
        "slack_rel": {"ratio": 0.07},
    },
}

# configurations exercised by criteria 1 through 8, rerun under criterion 12
RERUN_FOR_DETERMINISM = [
    "c1_no_tax_tilted",
    "c2_crude_g0",
    "c2_tilted_g0",
    "c2_crude_g5",
    "c2_tilted_g5",
    "c3_main",
    "c4a_ramp6",
    "c4b_ramp3",
    "c7b_discounted",
    "c7c_ramp9_tax",
    "c8_diagnostic",
]

_CACHE: dict = {}


def report_for(name: str):
    if name not in _CACHE:
        cfg = ExperimentConfig.from_dict(CONFIGS[name])
        t0 = time.perf_counter()
        rep = run_experiment(cfg, workers=1)
        _CACHE[name] = (rep, time.perf_counter() - t0)
    return _CACHE[name]


def rows_by_u(report: dict, quantity: str) -> dict:
    out = {}
    for r in report["rows"]:
        if r["quantity"] == quantity:
            out[float(r["u"])] = r
    return out


def fnum(s: str) -> float:
    return float(s) if s not in ("", "nan") else math.nan


def verdict(tag: str, ok: bool, detail: str) -> None:
    print(f"[acceptance {tag}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_criterion_01_no_tax_cramer_exactness():
    report, elapsed = report_for("c1_no_tax_tilted")
    rows = rows_by_u(report, "ruin")
    details = []
    ok = True
    for u in (2.0, 5.0, 10.0):
        est = fnum(rows[u]["estimate"])
        se = fnum(rows[u]["stderr"])
        want = (2.0 / 3.0) * math.exp(-u / 3.0)
        ok = ok and abs(est - want) <= 3.0 * se
        details.append(f"u={u}: {est:.6f} vs {want:.6f} (3se={3*se:.2g})")
    details.append(f"runtime {elapsed / 3:.2f}s per u")
    verdict("1 no-tax Cramer", ok, "; ".join(details))


def test_criterion_02_crude_vs_tilted_overlap():
    pairs = [("c2_crude_g0", "c2_tilted_g0", 0.0), ("c2_crude_g5", "c2_tilted_g5", 0.5)]
    details = []
    ok = True
    for crude_name, tilt_name, gamma in pairs:
        crude = rows_by_u(report_for(crude_name)[0], "ruin")
        tilt = rows_by_u(report_for(tilt_name)[0], "ruin")
        for u in (1.0, 2.0):
            e1, s1 = fnum(crude[u]["estimate"]), fnum(crude[u]["stderr"])
            e2, s2 = fnum(tilt[u]["estimate"]), fnum(tilt[u]["stderr"])
            lo = max(e1 - 1.96 * s1, e2 - 1.96 * s2)
            hi = min(e1 + 1.96 * s1, e2 + 1.96 * s2)
            ok = ok and lo <= hi
            details.append(f"g={gamma} u={u}: crude {e1:.5f} vs tilted {e2:.5f}")
    verdict("2 crude/tilted overlap", ok, "; ".join(details))


def test_criterion_03_tax_cramer_limit():
    report, _ = report_for("c3_main")
    ruin = rows_by_u(report, "ruin")[15.0]
    scaled = fnum(ruin["estimate"]) * math.exp(ALPHA * 15.0)
    se_scaled = fnum(ruin["stderr"]) * math.exp(ALPHA * 15.0)
    ok1 = abs(scaled - 4.0 / 3.0) <= max(0.05 * 4.0 / 3.0, 3 * se_scaled)
    ratio = rows_by_u(report, "ratio")[15.0]
    est_r, se_r = fnum(ratio["estimate"]), fnum(ratio["stderr"])
    ok2 = abs(est_r - 2.0) <= max(0.05 * 2.0, 3 * se_r)
    ok = ok1 and ok2 and ruin["pass"] is True and ratio["pass"] is True
    verdict(
        "3 taxed Cramer limit",
        ok,
        f"e^(au)P = {scaled:.4f} vs 4/3; ratio {est_r:.4f} vs 2",
    )


def test_criterion_04_harmonic_ramp_limits():
    report, _ = report_for("c4a_ramp6")
    row = rows_by_u(report, "ruin")[15.0]
    scaled = fnum(row["estimate"]) * math.exp(ALPHA * 15.0)
    se_scaled = fnum(row["stderr"]) * math.exp(ALPHA * 15.0)
    want = 0.7568901888
    ok1 = abs(scaled - want) <= max(0.10 * want, 3 * se_scaled) and row["pass"] is True

    rep_b, _ = report_for("c4b_ramp3")
    rows = rows_by_u(rep_b, "ruin")
    vals = [fnum(rows[u]["estimate"]) * math.exp(ALPHA * u) for u in (5.0, 10.0, 15.0)]
    ok2 = vals[0] < vals[1] < vals[2]
    verdict(
        "4 ramp limits",
        ok1 and ok2,
        f"beta=6: {scaled:.4f} vs {want:.4f}; beta=3 growth {['%.3f' % v for v in vals]}",
    )


def test_criterion_05_joint_law():
    report, _ = report_for("c3_main")
    ks_o = fnum(rows_by_u(report, "joint_ks_overshoot")[15.0]["estimate"])
    ks_d = fnum(rows_by_u(report, "joint_ks_depth")[15.0]["estimate"])
    mass = fnum(rows_by_u(report, "joint_mass_undershoot_below_depth")[15.0]["estimate"])
    n_cond = rows_by_u(report, "joint_ks_overshoot")[15.0]["n"]
    ok = ks_o < 0.02 and ks_d < 0.03 and mass < 0.005 and n_cond >= 10_000
    verdict(
        "5 joint law",
        ok,
        f"KS overshoot {ks_o:.4f} < 0.02, KS depth {ks_d:.4f} < 0.03, "
        f"mass(v<y) {mass:.4g} < 0.005, n={n_cond}",
    )


def test_criterion_06_edpf_limit(cl_base):
    report, _ = report_for("c3_main")
    row = rows_by_u(report, "edpf")[15.0]
    est, se = fnum(row["estimate"]), fnum(row["stderr"])
    ok1 = abs(est - 0.5) <= max(0.05 * 0.5, 3 * se) and row["pass"] is True
    # the degenerate penalty is an exact ratio of identical sums
    batch = run_batch(cl_base, Constant(0.5), 2.0, "q", 2000, 1006)
    trivial = edpf(batch, 0.0, 0.0, 0.0)
    ok2 = trivial.mean == 1.0 and trivial.stderr == 0.0
    verdict("6 penalty limit", ok1 and ok2, f"edpf {est:.4f} vs 0.5; trivial == 1 exactly")


def test_criterion_07_tax_values():
    report, _ = report_for("c3_main")
    row0 = rows_by_u(report, "tax")[15.0]
    ok0 = row0["pass"] is True
    rowd = rows_by_u(report_for("c7b_discounted")[0], "tax")[15.0]
    okd = rowd["pass"] is True
    rowr = rows_by_u(report_for("c7c_ramp9_tax")[0], "tax")[15.0]
    okr = rowr["pass"] is True
    verdict(
        "7 tax values",
        ok0 and okd and okr,
        f"delta=0: {fnum(row0['estimate']):.4f} vs 3; "
        f"delta=0.1: {fnum(rowd['estimate']):.4f} vs {fnum(rowd['predicted']):.4f}; "
        f"ramp beta=9: {fnum(rowr['estimate']):.4f} vs 0.3279 "
        f"(3se={3 * fnum(rowr['stderr']):.4f})",
    )


def test_criterion_08_first_excursion_diagnostic():
    report, _ = report_for("c8_diagnostic")
    rows = rows_by_u(report, "diagnostic")
    vals = [fnum(rows[u]["estimate"]) for u in (5.0, 10.0, 15.0)]
    ok = vals[0] > vals[1] > vals[2] and vals[2] < 0.05
    verdict(
        "8 first-excursion diagnostic",
        ok,
        f"ratios {['%.4f' % v for v in vals]} decreasing, last < 0.05",
    )


def test_criterion_09_analytic_identities(cl_base, two_sided):
    bm = __import__("taxruin").BrownianDrift(1.0, 1.0)
    checks = []
    # Wiener-Hopf residual on a grid, all models
    worst_wh = 0.0
    for m, grid in ((cl_base, np.linspace(-0.9, 2.5, 15)),
                    (two_sided, np.linspace(-0.9, 1.9, 15)),
                    (bm, np.linspace(-3.0, 3.0, 15))):
        le = ladder_exponents(m)
        for a in (0.0, 0.2, 1.0):
            for th in grid:
                resid = abs(
                    le.kappa(a, th) * le.kappa_hat(a, -th)
                    - (a - laplace_exponent(m, -th))
                ) / max(1.0, abs(a - laplace_exponent(m, -th)))
                worst_wh = max(worst_wh, resid)
    checks.append(("WH residual", worst_wh, 1e-9))
    le = ladder_exponents(cl_base)
    checks.append(("kappa(0,-alpha)", abs(le.kappa(0.0, -ALPHA)), 1e-9))
    checks.append(("q consistency", q_consistency(cl_base), 1e-9))
    checks.append(("edpf(0,0,0)-1", abs(predict_edpf(cl_base, 0, 0, 0).value - 1), 1e-9))
    checks.append(("joint mass - 1", abs(joint_total_mass(cl_base) - 1), 1e-9))
    worst_tilt = 0.0
    for m in (cl_base, two_sided, bm):
        a = lundberg_root(m)
        q = esscher_tilt(m, a)
        for th in (-0.4, -0.1, 0.0, 0.2, 0.45):
            worst_tilt = max(
                worst_tilt,
                abs(laplace_exponent(q, th) - laplace_exponent(m, th + a)),
            )
    checks.append(("tilt shift", worst_tilt, 1e-10))
    ok = all(v <= tol for _, v, tol in checks)
    verdict(
        "9 analytic identities",
        ok,
        "; ".join(f"{name} {v:.2e} <= {tol:.0e}" for name, v, tol in checks),
    )


def test_criterion_10_pathwise_properties(cl_base, two_sided):
    policies = [
        Constant(0.0),
        Constant(0.5),
        HarmonicRamp(4.0),
        Table((1.0, 3.0), (0.1, 0.4, 0.8)),
    ]
    n_paths = 1000
    from taxruin import run_path

    for model in (cl_base, two_sided):
        for pol in policies:
            for i in range(n_paths):
                rec = run_path(model, pol, 2.0, "p", seed=1010, replica=i, collect_log=True)
                check_log_invariants(rec, tol=1e-10)
    for lo, hi in ((Constant(0.0), Constant(0.5)), (Constant(0.5), Constant(1.0))):
        for i in range(n_paths):
            check_coupled_monotone(cl_base, lo, hi, 2.0, seed=1011, replica=i)
    verdict(
        "10 pathwise properties",
        True,
        f"{n_paths} paths x {2 * len(policies)} model/policy combos "
        "+ monotone couplings",
    )


def test_criterion_11_two_sided_ratio(two_sided):
    report, _ = report_for("c11_two_sided")
    row = rows_by_u(report, "ratio")[12.0]
    est, se = fnum(row["estimate"]), fnum(row["stderr"])
    want = predict_ruin_ratio(two_sided, 0.5).value
    ok = abs(est - want) <= max(0.07 * want, 3 * se) and row["pass"] is True
    verdict("11 two-sided ratio", ok, f"{est:.4f} vs {want:.4f} (3se={3 * se:.4f})")


def test_criterion_12_determinism_across_workers():
    mismatched = []
    for name in RERUN_FOR_DETERMINISM:
        ref_bytes = render_report_json(report_for(name)[0])
        cfg = ExperimentConfig.from_dict(CONFIGS[name])
        rerun = run_experiment(cfg, workers=2)
        if render_report_json(rerun) != ref_bytes:
            mismatched.append(name)
    verdict(
        "12 determinism",
        not mismatched,
        f"criteria 1-8 configs byte-identical across worker counts "
        f"({len(RERUN_FOR_DETERMINISM)} reruns)" if not mismatched
        else f"mismatched: {mismatched}",
    )
