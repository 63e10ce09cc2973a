"""Case-study runner, synthetic fixtures and the self-verification suite."""

from __future__ import annotations

import contextlib
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import CASES, PipelineConfig, case_spec
from .data import (
    DATE,
    INPUT,
    OUTPUT,
    Dataset,
    SplitSpec,
    TimeSeries,
    ingest_csv,
    write_csv,
)
from .dictionary import LagSpec, RegressionProblem, Term, build_dictionary
from .epi import SEIRParams, SEIRState, derive_rn, estimate_rates, reproduction_number, seir_integrate
from .errors import DataError, NarxError, ValidationError
from .frols import SelectionConfig, estimate_parameters, frols_select, identify
from .predict import one_step_predict, r_square, residual_diagnostics, write_prediction_csv

# y(t) = a u(t-12) + b u(t-40) + c
TWO_LAG_COEFFICIENTS = {Term.of(("u", 12)): 3.5551e4, Term.of(("u", 40)): -6.2117e3, Term(): -1.17395e4}

NARX_TRUE = {
    Term.of(("y", 1)): 0.5,
    Term.of(("u", 1)): -0.3,
    Term.of(("u", 1), ("u", 1)): 0.1,
}
NARX_SPEC = LagSpec.narx("y", {"u": (1, 1)}, output_lags=(1, 1), degree=3, include_constant=False)


class StageError(NarxError):
    """A pipeline stage failed; wraps the original error with the stage name."""

    def __init__(self, stage: str, cause: NarxError):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except NarxError as exc:
        raise StageError(name, exc) from exc


def synthetic_narx(seed: int, n: int = 500, noise: float = 0.01, start_day: int = 0) -> Dataset:
    """``y(t) = 0.5 y(t-1) - 0.3 u(t-1) + 0.1 u(t-1)^2 + e(t)``, ``u ~ U(-1, 1)``.

    ``noise`` is the noise standard deviation as a fraction of the standard
    deviation of the noise-free output.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, n)
    z = rng.standard_normal(n)

    def simulate(e):
        y = np.zeros(n)
        for t in range(1, n):
            y[t] = 0.5 * y[t - 1] - 0.3 * u[t - 1] + 0.1 * u[t - 1] ** 2 + e[t]
        return y

    sigma = noise * simulate(np.zeros(n)).std()
    return Dataset.from_arrays({"y": simulate(sigma * z), "u": u}, "y", start_day)


def synthetic_two_lag(seed: int, n: int = 529, noise: float = 0.01, start_day="2020-03-04") -> Dataset:
    """Output driven by lags 12 and 40 of an input that fluctuates around 1."""
    rng = np.random.default_rng(seed)
    u = 1.0 + 0.25 * rng.standard_normal(n + 40)
    coef = TWO_LAG_COEFFICIENTS
    y = coef[Term.of(("u", 12))] * u[28 : n + 28] + coef[Term.of(("u", 40))] * u[:n] + coef[Term()]
    y = y + noise * y.std() * rng.standard_normal(n)
    return Dataset.from_arrays({"y": y, "u": u[40:]}, "y", start_day)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _random_problem(rng, n_rows, n_cols):
    cols = rng.standard_normal((n_rows, n_cols))
    y = cols[:, : min(5, n_cols)] @ rng.standard_normal(min(5, n_cols)) + 0.5 * rng.standard_normal(n_rows)
    return RegressionProblem(cols, y, 0, tuple(Term.of((f"x{j}", 0)) for j in range(n_cols)))


def greedy_gap(problem: RegressionProblem, trace) -> float:
    """Largest ERR by which any surviving candidate beats the chosen one, by rescan.

    The rescan projects with least squares on the raw selected columns, so it
    does not share code with the selection loop.
    """
    y = problem.target
    yy = float(y @ y)
    worst = -np.inf
    for k, step in enumerate(trace.steps):
        chosen = problem.columns[:, trace.indices[:k]]
        errs = {}
        for j in range(problem.n_terms):
            if j in trace.indices[:k]:
                continue
            w = problem.columns[:, j]
            if k:
                w = w - chosen @ np.linalg.lstsq(chosen, w, rcond=None)[0]
            ww = float(w @ w)
            if ww <= trace.collinearity_tol * float(problem.columns[:, j] @ problem.columns[:, j]):
                continue
            errs[j] = float(y @ w) ** 2 / (ww * yy)
        worst = max(worst, max(errs.values()) - errs[step.index])
    return max(worst, 0.0)


def _param_check(model, truth, tol=0.05):
    got = dict(zip(model.terms, model.parameters))
    if set(got) != set(truth):
        return False, f"terms {[str(t) for t in model.terms]}"
    worst = max(abs(got[t] / v - 1.0) for t, v in truth.items())
    return worst <= tol, f"max relative parameter error {worst:.3e}"


def run_synthetic_suite(seed: int = 0) -> list[Check]:
    """Recovery and consistency checks on generated data; deterministic for a seed."""
    checks: list[Check] = []
    rng = np.random.default_rng(seed)

    terms = [str(t) for t in build_dictionary(NARX_SPEC)]
    expected = ["y(t-1)", "u(t-1)", "y(t-1)^2", "u(t-1)*y(t-1)", "u(t-1)^2",
                "y(t-1)^3", "u(t-1)*y(t-1)^2", "u(t-1)^2*y(t-1)", "u(t-1)^3"]
    checks.append(Check("dictionary", terms == expected, ", ".join(terms)))

    model = identify(synthetic_narx(seed), NARX_SPEC)
    ok, detail = _param_check(model, NARX_TRUE)
    checks.append(Check("narx_recovery", ok, f"{[str(t) for t in model.terms]}; {detail}"))

    worst_energy = worst_ols = worst_greedy = 0.0
    for _ in range(20):
        p = _random_problem(rng, int(rng.integers(60, 200)), int(rng.integers(2, 30)))
        tr = frols_select(p, SelectionConfig(max_terms=p.n_terms))
        yy = float(p.target @ p.target)
        q = tr.basis
        identity = yy - float(np.sum((p.target @ q) ** 2 / np.einsum("ij,ij->j", q, q)))
        worst_energy = max(worst_energy, abs(identity - tr.energies[-1]) / yy)
        a = p.columns[:, tr.indices]
        oracle = np.linalg.solve(a.T @ a, a.T @ p.target)
        theta = estimate_parameters(p, tr)
        worst_ols = max(worst_ols, float(np.linalg.norm(theta - oracle) / np.linalg.norm(oracle)))
        worst_greedy = max(worst_greedy, greedy_gap(p, tr))
    checks.append(Check("energy_identity", worst_energy <= 1e-10, f"max relative gap {worst_energy:.3e}"))
    checks.append(Check("ols_equivalence", worst_ols <= 1e-8, f"max relative error {worst_ols:.3e}"))
    checks.append(Check("greedy_optimality", worst_greedy <= 1e-10, f"max ERR shortfall {worst_greedy:.3e}"))

    N = 1e6
    traj = seir_integrate(SEIRParams(N, beta=0.3, r=0.001), SEIRState(N - 100, 0, 100, 0, 0), 500)
    drift = float(np.max(np.abs(traj.totals - N)) / N)
    checks.append(Check("seir_conservation", drift <= 1e-9, f"max drift {drift:.3e} N"))

    traj = seir_integrate(SEIRParams(N, beta=0.3, r=0.001), SEIRState(N - 100, 0, 100, 0, 0), 160)
    rates = estimate_rates(traj.I, traj.D, N)
    inner = slice(10, 150)
    b_err = float(np.max(np.abs(rates.beta.values[inner] / 0.3 - 1)))
    r_err = float(np.max(np.abs(rates.r.values[inner] / 0.001 - 1)))
    checks.append(Check("rate_recovery", max(b_err, r_err) <= 0.02,
                        f"beta error {b_err:.3e}, r error {r_err:.3e}"))

    rn = reproduction_number(0.3, N, 0.001, 1 / 14, N)
    exact = 0.3 / (0.001 + 1 / 14)
    checks.append(Check("rn_formula", abs(rn - exact) <= 1e-12, f"RN = {rn:.12f}"))

    lag_spec = LagSpec.narx("y", {"u": (1, 42)}, degree=1)
    model = identify(synthetic_two_lag(seed), lag_spec, SelectionConfig(), SplitSpec(361, 168))
    ok, detail = _param_check(model, TWO_LAG_COEFFICIENTS)
    checks.append(Check("two_lag_recovery", ok, f"{[str(t) for t in model.terms]}; {detail}"))
    return checks


def verification_report(seed: int) -> tuple[str, bool]:
    checks = run_synthetic_suite(seed)
    lines = [f"narxfrols {__version__} verification, seed {seed}"] + [c.line() for c in checks]
    failed = [c.name for c in checks if not c.passed]
    lines.append("all checks passed" if not failed else f"FAILED: {', '.join(failed)}")
    return "\n".join(lines) + "\n", not failed


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def provenance(config: PipelineConfig, data_path: Path | None) -> list[str]:
    lines = [f"narxfrols {__version__}", f"config sha256 {config.digest()}"]
    if data_path is not None:
        lines.append(f"data sha256 {file_digest(data_path)}")
    return lines


def load_case_data(config: PipelineConfig) -> tuple[Dataset, TimeSeries, Path]:
    """Daily cases/deaths plus the R-number series (derived or read from ``rn_path``)."""
    dc = config.data
    path = config.resolve(dc.path)
    with stage("ingest"):
        raw = ingest_csv(
            path,
            {dc.date_column: DATE, dc.cases_column: OUTPUT, dc.deaths_column: INPUT},
            fill=dc.fill,
        )
    with stage("derive-rn"):
        if dc.rn_path:
            rn_ds = ingest_csv(config.resolve(dc.rn_path), {DATE: DATE, "rn": OUTPUT}, fill=dc.fill)
            offset = raw.start_day - rn_ds.start_day
            if offset < 0 or offset + len(raw) > len(rn_ds):
                raise DataError("R-number file does not cover the case/death date range")
            rn = rn_ds.output.slice(offset, offset + len(raw)).renamed("rn")
        else:
            ep = config.epi
            rn = derive_rn(
                raw.series[dc.cases_column],
                raw.series[dc.deaths_column],
                ep.population,
                ep.latent_days,
                ep.infectious_days,
                ep.active_window,
                ep.smooth_window,
                ep.clip_negative,
            ).rn
    return raw, rn, path


def case_dataset(which: str, raw: Dataset, rn: TimeSeries, cases_col: str, deaths_col: str) -> Dataset:
    rn = rn.renamed("rn")
    if which in ("cs1", "cs2"):
        return Dataset({"y": raw.series[cases_col], "u": rn}, {"y": OUTPUT, "u": INPUT})
    return Dataset(
        {"y": raw.series[deaths_col], "u_1": rn, "u_2": raw.series[cases_col]},
        {"y": OUTPUT, "u_1": INPUT, "u_2": INPUT},
    )


def run_case_study(config: PipelineConfig, which: str, out_dir: str | Path | None = None) -> dict:
    """Identify, predict and write every artifact for one case study."""
    if which not in CASES:
        raise ValidationError(f"unknown case {which!r}; expected one of {CASES}")
    out = Path(out_dir) if out_dir is not None else config.resolve(config.output_dir)
    out = out / which
    raw, rn, data_path = load_case_data(config)
    header = provenance(config, data_path) + [f"case {which}"]
    ds = case_dataset(which, raw, rn, config.data.cases_column, config.data.deaths_column)
    spec = case_spec(which, config.cases[which])

    with stage("identify"):
        dictionary = build_dictionary(spec)
        model = identify(ds, spec, config.selection, config.split)
    with stage("predict"):
        full = ds.slice(0, config.split.total)
        run = one_step_predict(model, full)
        train_end = ds.start_day + config.split.train_len
        train_run = run.window(run.predictions.start_day, train_end)
        test_run = run.window(train_end, train_end + config.split.test_len)
        r2_train = r_square(train_run.predictions, train_run.actual)
        r2_test = r_square(test_run.predictions, test_run.actual) if len(test_run.predictions) >= 2 else math.nan
        diag = residual_diagnostics(train_run) if len(train_run.predictions) >= 30 else None

    with stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        (out / "model_report.txt").write_text(model.report_text(header), encoding="utf-8")
        (out / "model_report.csv").write_text(model.report_csv(header), encoding="utf-8")
        model.save(out / "model.json")
        write_prediction_csv(run, out / "predictions.csv", train_end, header)
        write_csv(
            Dataset({"rn": rn.renamed("rn")}, {"rn": OUTPUT}), out / "rn.csv", header
        )
        summary = [f"# {h}" for h in header] + [
            f"equation: {model.equation()}",
            f"terms: {len(model)}",
            f"training rows: {model.n_eff}",
            f"r2_train: {r2_train:.4f}",
            f"r2_test: {r2_test:.4f}",
            f"horizon_days: {model.horizon_days}",
        ]
        (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
        trace_lines = [f"# {h}" for h in header] + ["step,index,term,err,residual_energy,g"]
        for k, s in enumerate(model.trace.steps, start=1):
            trace_lines.append(
                f"{k},{s.index},{model.terms[k - 1]},{s.err!r},{s.residual_energy!r},{s.g!r}"
            )
        (out / "trace.csv").write_text("\n".join(trace_lines) + "\n", encoding="utf-8")
        fold_lines = [f"# {h}" for h in header] + ["fold,held_out_start,held_out_stop,terms,held_out_mse"]
        for f in model.folds:
            names = ";".join(str(dictionary[i]) for i in f.indices)
            fold_lines.append(f"{f.fold},{f.held_out[0]},{f.held_out[1]},{names},{f.held_out_mse!r}")
        (out / "folds.csv").write_text("\n".join(fold_lines) + "\n", encoding="utf-8")
        if diag is not None:
            (out / "residuals.txt").write_text(
                "\n".join([f"# {h}" for h in header] + diag.lines()) + "\n", encoding="utf-8"
            )
    return {"model": model, "r2_train": r2_train, "r2_test": r2_test, "out": out}


def simulate_seir_to_csv(config: PipelineConfig, out_path: Path) -> Path:
    sc = config.seir
    params = SEIRParams(sc.population, sc.beta, sc.r, 1 / sc.latent_days, 1 / sc.infectious_days)
    s0 = sc.population - sc.initial_exposed - sc.initial_infected
    with stage("simulate-seir"):
        traj = seir_integrate(params, SEIRState(s0, sc.initial_exposed, sc.initial_infected, 0, 0), sc.days, sc.step)
    names = ["S", "E", "I", "R", "D"]
    ds = Dataset(
        {n: TimeSeries(n, sc.start_date, traj.states[:, k]) for k, n in enumerate(names)},
        {n: (OUTPUT if n == "I" else INPUT) for n in names},
    )
    return write_csv(ds, out_path, [f"narxfrols {__version__}", f"config sha256 {config.digest()}"])


def derive_rn_to_csv(config: PipelineConfig, out_path: Path) -> Path:
    dc, ep = config.data, config.epi
    path = config.resolve(dc.path)
    with stage("ingest"):
        raw = ingest_csv(path, {dc.date_column: DATE, dc.cases_column: OUTPUT, dc.deaths_column: INPUT}, fill=dc.fill)
    with stage("derive-rn"):
        rates = derive_rn(
            raw.series[dc.cases_column], raw.series[dc.deaths_column], ep.population,
            ep.latent_days, ep.infectious_days, ep.active_window, ep.smooth_window, ep.clip_negative,
        )
    return write_csv(rates.to_dataset(), out_path, provenance(config, path))
