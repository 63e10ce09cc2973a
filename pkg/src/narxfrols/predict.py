"""One-step prediction, free-run simulation, R² and residual checks.

Every term in the case-study models has lag >= 12, so a one-step prediction
at day t already uses only data at least 12 days old; that is what a
"12 days ahead" prediction means here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, TimeSeries, iso
from .dictionary import term_values
from .errors import DataError, DivergenceError, NumericalError, ValidationError
from .frols import IdentifiedModel

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class PredictionRun:
    mode: str
    predictions: TimeSeries
    actual: TimeSeries | None
    horizon_days: int

    def __post_init__(self):
        if self.mode not in ("one_step", "free_run"):
            raise ValidationError(f"unknown prediction mode {self.mode!r}")
        if self.actual is not None and (
            self.actual.start_day != self.predictions.start_day or len(self.actual) != len(self.predictions)
        ):
            raise DataError("predictions and actual values must share a date axis")

    @property
    def residuals(self) -> np.ndarray:
        if self.actual is None:
            raise DataError("no measured output to compare against")
        return self.actual.values - self.predictions.values

    def window(self, start_day: int, stop_day: int) -> "PredictionRun":
        """Restrict to days in ``[start_day, stop_day)``."""
        lo = max(start_day - self.predictions.start_day, 0)
        hi = max(min(stop_day - self.predictions.start_day, len(self.predictions)), lo)
        actual = None if self.actual is None else self.actual.slice(lo, hi)
        return PredictionRun(self.mode, self.predictions.slice(lo, hi), actual, self.horizon_days)


def _first_row(model: IdentifiedModel) -> int:
    return max(model.spec.max_lag, max((t.max_lag for t in model.terms), default=0))


def _actual(model: IdentifiedModel, dataset: Dataset, first: int) -> TimeSeries | None:
    if model.spec.output not in dataset:
        return None
    return dataset.series[model.spec.output].slice(first, len(dataset))


def one_step_predict(model: IdentifiedModel, dataset: Dataset) -> PredictionRun:
    """``y_hat(t) = sum_m theta_m psi_m(t)`` from measured lagged values, ``t >= max lag``."""
    first = _first_row(model)
    if len(dataset) <= first:
        raise DataError(f"dataset of length {len(dataset)} does not cover the maximum lag {first}")
    n = len(dataset) - first
    design = np.empty((n, len(model.terms)))
    for m, term in enumerate(model.terms):
        design[:, m] = term_values(term, dataset, first)
    pred = design @ model.parameters if model.terms else np.zeros(n)
    ts = TimeSeries(f"{model.spec.output}_hat", dataset.start_day + first, pred)
    return PredictionRun("one_step", ts, _actual(model, dataset, first), model.horizon_days)


def free_run_simulate(
    model: IdentifiedModel,
    inputs: Dataset,
    initial_output: Sequence[float] | None = None,
) -> PredictionRun:
    """Simulate with autoregressive terms fed by the model's own past outputs.

    ``initial_output`` seeds the output just before the first simulated day;
    it must cover the largest output lag. By default the measured output in
    ``inputs`` is used.
    """
    if not model.has_autoregression:
        run = one_step_predict(model, inputs)
        return PredictionRun("free_run", run.predictions, run.actual, run.horizon_days)

    out = model.spec.output
    first = _first_row(model)
    n = len(inputs)
    if n <= first:
        raise DataError(f"inputs of length {n} do not cover the maximum lag {first}")
    out_lag = max(l for t in model.terms for name, l in t.factors if name == out)
    if initial_output is None:
        if out not in inputs:
            raise DataError("initial output values are required when the output is not measured")
        seed = np.asarray(inputs[out][:first], dtype=float)
    else:
        seed = np.asarray(initial_output, dtype=float).reshape(-1)
    if seed.size < out_lag:
        raise DataError(f"seed of length {seed.size} does not cover output lag {out_lag}")
    seed = seed[-first:] if seed.size >= first else seed

    y = np.zeros(n)
    y[first - seed.size : first] = seed
    parts, ar_lags = [], []
    for term in model.terms:
        exo = term.__class__(tuple(f for f in term.factors if f[0] != out))
        parts.append(term_values(exo, inputs, first) if exo.factors else np.ones(n - first))
        ar_lags.append([l for name, l in term.factors if name == out])

    scale = model.max_abs_output
    if not math.isfinite(scale) or scale <= 0:
        scale = max(float(np.max(np.abs(seed))), 1.0)
    bound = DIVERGENCE_FACTOR * scale
    theta = model.parameters
    for i, t in enumerate(range(first, n)):
        acc = 0.0
        for m in range(len(theta)):
            v = theta[m] * parts[m][i]
            for lag in ar_lags[m]:
                v *= y[t - lag]
            acc += v
        if not math.isfinite(acc) or abs(acc) > bound:
            raise DivergenceError(f"free-run simulation diverged at step {i} (t={t})", step=i)
        y[t] = acc
    ts = TimeSeries(f"{out}_sim", inputs.start_day + first, y[first:])
    return PredictionRun("free_run", ts, _actual(model, inputs, first), model.horizon_days)


def r_square(pred, actual) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    p = np.asarray(pred.values if isinstance(pred, TimeSeries) else pred, dtype=float)
    a = np.asarray(actual.values if isinstance(actual, TimeSeries) else actual, dtype=float)
    if p.shape != a.shape or a.size < 2:
        raise ValidationError("R² needs two equal-length series of at least 2 points")
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise NumericalError("R² is undefined for a constant actual series")
    return 1.0 - float(np.sum((a - p) ** 2)) / ss_tot


@dataclass(frozen=True)
class ResidualReport:
    n: int
    mean: float
    variance: float
    autocorrelation: np.ndarray
    band: float

    @property
    def inside_band(self) -> np.ndarray:
        return np.abs(self.autocorrelation) <= self.band

    def lines(self) -> list[str]:
        out = [
            f"n = {self.n}",
            f"mean = {self.mean:.6e}",
            f"variance = {self.variance:.6e}",
            f"whiteness band = +/-{self.band:.6f}",
            "lag,autocorrelation,inside_band",
        ]
        for k, (r, ok) in enumerate(zip(self.autocorrelation, self.inside_band), start=1):
            out.append(f"{k},{r:.6f},{'yes' if ok else 'no'}")
        return out


def residual_diagnostics(run: PredictionRun | Sequence[float], max_lag: int = 20) -> ResidualReport:
    e = run.residuals if isinstance(run, PredictionRun) else np.asarray(run, dtype=float)
    n = e.size
    if n < 30:
        raise ValidationError(f"residual diagnostics need at least 30 points, got {n}")
    mean = float(e.mean())
    c = e - mean
    denom = float(c @ c)
    lags = min(max_lag, n - 1)
    if denom == 0.0:
        acf = np.zeros(lags)
    else:
        acf = np.array([float(c[k:] @ c[:-k]) / denom for k in range(1, lags + 1)])
    return ResidualReport(n, mean, denom / n, acf, 1.96 / math.sqrt(n))


def write_prediction_csv(run: PredictionRun, path: str | Path, train_end_day: int,
                         comments: Sequence[str] = ()) -> Path:
    """Write ``date, actual, predicted, split`` rows; days before ``train_end_day`` are ``train``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    actual = run.actual.values if run.actual is not None else np.full(len(run.predictions), np.nan)
    with path.open("w", newline="", encoding="utf-8") as handle:
        for line in comments:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["date", "actual", "predicted", "split"])
        for day, a, p in zip(run.predictions.days, actual, run.predictions.values):
            writer.writerow([iso(day), repr(float(a)), repr(float(p)), "train" if day < train_end_day else "test"])
    return path
