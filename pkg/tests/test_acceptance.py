"""Acceptance criteria 1-11, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line; the lines are printed together in the
terminal summary.
"""

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_problem
from narxfrols.config import PipelineConfig
from narxfrols.data import SplitSpec, read_table
from narxfrols.dictionary import LagSpec, build_dictionary
from narxfrols.epi import SEIRParams, SEIRState, estimate_rates, reproduction_number, seir_integrate
from narxfrols.frols import SelectionConfig, estimate_parameters, frols_select, identify
from narxfrols.pipeline import (
    NARX_SPEC,
    NARX_TRUE,
    TWO_LAG_COEFFICIENTS,
    greedy_gap,
    run_case_study,
    synthetic_narx,
    synthetic_two_lag,
)

FULL = SelectionConfig(max_terms=100, size_criterion="fixed")


def record(n, name, ok, detail, elapsed=None, budget=None):
    timing = "" if elapsed is None else f" [{elapsed:.3f}s / {budget}s]"
    ACCEPTANCE_LINES[n] = f"{n:>2}. {'PASS' if ok else 'FAIL'}  {name}: {detail}{timing}"
    print(ACCEPTANCE_LINES[n])
    assert ok, ACCEPTANCE_LINES[n]


def test_01_dictionary_exactness():
    spec = LagSpec.narx("y", {"u": (1, 1)}, output_lags=(1, 1), degree=3, include_constant=False)
    best = min(_timed(build_dictionary, spec)[1] for _ in range(20))
    terms = [str(t) for t in build_dictionary(spec)]
    expected = ["y(t-1)", "u(t-1)", "y(t-1)^2", "u(t-1)*y(t-1)", "u(t-1)^2",
                "y(t-1)^3", "u(t-1)*y(t-1)^2", "u(t-1)^2*y(t-1)", "u(t-1)^3"]
    record(1, "dictionary exactness", terms == expected and best < 1e-3,
           f"{len(terms)} terms in documented order", best, 0.001)


def test_02_energy_identity():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        p = random_problem(rng, int(rng.integers(20, 501)), int(rng.integers(1, 101)))
        tr = frols_select(p, SelectionConfig())
        yy = float(p.target @ p.target)
        q = tr.basis
        explained = float(np.sum((p.target @ q) ** 2 / np.einsum("ij,ij->j", q, q)))
        r = p.target - p.columns[:, tr.indices] @ estimate_parameters(p, tr)
        worst = max(worst, abs(yy - explained - float(r @ r)) / yy)
    elapsed = time.perf_counter() - start
    record(2, "energy identity", worst <= 1e-10 and elapsed < 10,
           f"200 problems, max relative gap {worst:.2e} (tol 1e-10)", elapsed, 10)


def test_03_ols_oracle_equivalence():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst_theta = worst_full = 0.0
    for _ in range(50):
        n_rows = int(rng.integers(40, 301))
        p = random_problem(rng, n_rows, int(rng.integers(1, min(60, n_rows - 1))))
        tr = frols_select(p, SelectionConfig())
        a = p.columns[:, tr.indices]
        oracle = np.linalg.solve(a.T @ a, a.T @ p.target)
        theta = estimate_parameters(p, tr)
        worst_theta = max(worst_theta, float(np.linalg.norm(theta - oracle) / np.linalg.norm(oracle)))
        full = frols_select(p, FULL)
        r = p.target - p.columns @ np.linalg.lstsq(p.columns, p.target, rcond=None)[0]
        worst_full = max(worst_full, abs(full.energies[-1] - float(r @ r)) / float(r @ r))
    elapsed = time.perf_counter() - start
    ok = worst_theta <= 1e-8 and worst_full <= 1e-8 and elapsed < 10
    record(3, "OLS-oracle equivalence", ok,
           f"theta rel err {worst_theta:.2e}, full-selection residual rel err {worst_full:.2e} (tol 1e-8)",
           elapsed, 10)


def test_04_term_recovery():
    start = time.perf_counter()
    passed = []
    for seed in range(100):
        model = identify(synthetic_narx(seed), NARX_SPEC)
        got = dict(zip(model.terms, model.parameters))
        ok = set(got) == set(NARX_TRUE) and all(abs(got[t] / v - 1) <= 0.05 for t, v in NARX_TRUE.items())
        passed.append(ok)
    elapsed = time.perf_counter() - start
    missed = [s for s, ok in enumerate(passed) if not ok]
    record(4, "term recovery", sum(passed) >= 95 and elapsed < 30,
           f"{sum(passed)}/100 seeds recovered (need 95), missed seeds {missed}", elapsed, 30)


def test_05_greedy_optimality():
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(30):
        p = random_problem(rng, int(rng.integers(60, 200)), int(rng.integers(2, 51)))
        tr = frols_select(p, SelectionConfig(max_terms=10, size_criterion="fixed"))
        worst = max(worst, greedy_gap(p, tr))
    elapsed = time.perf_counter() - start
    record(5, "greedy optimality", worst <= 1e-12 and elapsed < 10,
           f"30 problems, max ERR shortfall vs exhaustive rescan {worst:.2e}", elapsed, 10)


def test_06_seir_conservation():
    N = 1e6
    start = time.perf_counter()
    traj = seir_integrate(SEIRParams(N, beta=0.3, r=0.001), SEIRState(N - 100, 0, 100, 0, 0), 500, 0.1)
    drift = float(np.max(np.abs(traj.totals - N)))
    x0 = SEIRState(N - 10, 0, 0, 6, 4)
    free = seir_integrate(SEIRParams(N, beta=0.0, r=0.001), x0, 500, 0.1)
    constant = bool(np.all(free.states == x0.as_array()))
    elapsed = time.perf_counter() - start
    record(6, "SEIR conservation", drift <= 1e-9 * N and constant and elapsed < 1,
           f"max |sum - N| = {drift / N:.2e} N, disease-free state constant: {constant}", elapsed, 1)


def test_07_closed_loop_rates():
    N = 1e6
    start = time.perf_counter()
    traj = seir_integrate(SEIRParams(N, beta=0.3, r=0.001), SEIRState(N - 100, 0, 100, 0, 0), 160)
    rates = estimate_rates(traj.I, traj.D, N)
    inner = slice(10, 150)
    b = float(np.max(np.abs(rates.beta.values[inner] / 0.3 - 1)))
    r = float(np.max(np.abs(rates.r.values[inner] / 0.001 - 1)))
    elapsed = time.perf_counter() - start
    record(7, "closed-loop rate recovery", max(b, r) <= 0.02 and elapsed < 1,
           f"max rel err beta {b:.2e}, r {r:.2e} on days 10-149 (tol 2e-2)", elapsed, 1)


def test_08_rn_formula():
    N = 1e6
    got = reproduction_number(0.3, N, 0.001, 1 / 14, N)
    exact = 0.3 / (0.001 + 1 / 14)
    basic = reproduction_number(0.3, N, 0.0, 1 / 14, N)
    ok = abs(got - exact) <= 1e-12 and basic == 0.3 / (1 / 14)
    record(8, "RN formula", ok, f"RN = {got:.12f}, S=N and r=0 gives beta/gamma exactly: {basic == 0.3 / (1 / 14)}")


def test_09_two_lag_self_consistency():
    start = time.perf_counter()
    model = identify(synthetic_two_lag(0), LagSpec.narx("y", {"u": (1, 42)}, degree=1),
                     SelectionConfig(), SplitSpec(361, 168))
    got = dict(zip(model.terms, model.parameters))
    same = set(got) == set(TWO_LAG_COEFFICIENTS)
    worst = max(abs(got[t] / v - 1) for t, v in TWO_LAG_COEFFICIENTS.items()) if same else float("inf")
    elapsed = time.perf_counter() - start
    record(9, "lags {12, 40} + constant self-consistency", same and worst <= 0.05 and elapsed < 30,
           f"terms {sorted(map(str, model.terms))}, max coefficient rel err {worst:.2e}", elapsed, 30)


def _uk_data() -> Path | None:
    env = os.environ.get("NARXFROLS_UK_DATA")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).parent / "data" / "uk_covid.csv")
    return next((p for p in candidates if p.is_file()), None)


def test_10_case_study_best_effort(tmp_path):
    path = _uk_data()
    if path is None:
        ACCEPTANCE_LINES[10] = (
            "10. NOT RUN  case-study comparison: no UK data file "
            "(set NARXFROLS_UK_DATA or add tests/data/uk_covid.csv); best-effort, not gating"
        )
        pytest.skip("UK case/death data not available offline")
    cfg = PipelineConfig.from_dict({"data": {"path": str(path.resolve())}}, tmp_path)
    cs2 = run_case_study(cfg, "cs2", tmp_path)
    cs3 = run_case_study(cfg, "cs3", tmp_path)
    top = read_table(cs3["out"] / "model_report.csv")[0]["Model Term"]
    ACCEPTANCE_LINES[10] = (
        f"10. INFO  case-study comparison (not gating): cs2 R2 train {cs2['r2_train']:.4f} vs 0.8991, "
        f"test {cs2['r2_test']:.4f} vs 0.8544; cs3 top term {top} vs u_2(t-13)"
    )


def test_11_determinism(tmp_path):
    start = time.perf_counter()
    outs = []
    for k in range(2):
        out = tmp_path / f"verify{k}.txt"
        r = subprocess.run([sys.executable, "-m", "narxfrols", "verify", "--seed", "7", "--out", str(out)],
                           capture_output=True)
        outs.append((r.returncode, out.read_bytes(), r.stdout))
    elapsed = time.perf_counter() - start
    same = outs[0][1] == outs[1][1] and outs[0][2] == outs[1][2]
    record(11, "determinism", same and outs[0][0] == 0 and elapsed < 60,
           f"two `verify --seed 7` reports byte-identical: {same}, exit {outs[0][0]}", elapsed, 60)


def _timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start
