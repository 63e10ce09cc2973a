import numpy as np
import pytest

from narxfrols.data import day_from_date, iso
from narxfrols.dictionary import RegressionProblem, Term
from narxfrols.epi import SEIRParams, SEIRState, seir_integrate


def random_problem(rng, n_rows, n_cols, n_true=5, noise=0.5):
    cols = rng.standard_normal((n_rows, n_cols))
    k = min(n_true, n_cols)
    y = cols[:, :k] @ rng.standard_normal(k) + noise * rng.standard_normal(n_rows)
    return RegressionProblem(cols, y, 0, tuple(Term.of((f"x{j}", 0)) for j in range(n_cols)))


def write_epidemic_csv(path, days=560, seed=1, start="2020-03-04"):
    """Daily cases/deaths from an SEIR-D run with a wavy contact rate."""
    N = 67_886_011.0
    t = np.arange(days)
    beta = 0.12 + 0.06 * np.sin(2 * np.pi * t / 120) + 0.02 * np.cos(2 * np.pi * t / 37)
    traj = seir_integrate(SEIRParams(N, beta=beta, r=0.0015), SEIRState(N - 2e4, 1e4, 1e4, 0, 0), days)
    cases = np.round(0.2 * traj.E[:-1])
    rng = np.random.default_rng(seed)
    cases = np.maximum(cases + np.round(rng.normal(0, 0.02 * cases.mean(), days)), 0)
    deaths = np.round(np.diff(traj.D))
    d0 = day_from_date(start)
    lines = ["date,cases,deaths"] + [f"{iso(d0 + k)},{int(cases[k])},{int(deaths[k])}" for k in range(days)]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def epidemic_csv(tmp_path):
    return write_epidemic_csv(tmp_path / "uk.csv")


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
