"""SEIR-D compartment model and reproduction-number reconstruction.

Flows (mass-action incidence)::

    S' = -beta I S / N
    E' =  beta I S / N - delta E
    I' =  delta E - (r + gamma) I
    R' =  gamma I
    D' =  r I

``RN(t) = beta(t) S(t) / (N (r(t) + gamma))``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .data import Dataset, OUTPUT, INPUT, TimeSeries, centered_moving_average, trailing_sum
from .errors import DataError, IntegratorError, NumericalError, ValidationError

Rate = Union[float, Sequence[float], np.ndarray, Callable[[float], float]]

LATENT_DAYS = 5.0
INFECTIOUS_DAYS = 14.0


@dataclass(frozen=True)
class SEIRParams:
    """Population size, constant rates ``delta``/``gamma`` and time-varying ``beta``/``r`` (1/day).

    ``beta`` and ``r`` may be constants, per-day sequences (held constant
    within each day, last value extended) or callables of time in days.
    """

    N: float
    beta: Rate = 0.0
    r: Rate = 0.0
    delta: float = 1.0 / LATENT_DAYS
    gamma: float = 1.0 / INFECTIOUS_DAYS

    def __post_init__(self):
        if not self.N > 0:
            raise ValidationError("population size N must be positive")
        if not (self.delta > 0 and self.gamma > 0):
            raise ValidationError("delta and gamma must be positive")
        for name in ("beta", "r"):
            v = getattr(self, name)
            if not callable(v) and np.any(np.asarray(v, dtype=float) < 0):
                raise ValidationError(f"{name} must be non-negative")

    @staticmethod
    def _at(rate: Rate, t: float, day: int) -> float:
        if callable(rate):
            value = float(rate(t))
        elif np.ndim(rate) == 0:
            return float(rate)
        else:
            seq = np.asarray(rate, dtype=float)
            value = float(seq[min(max(day, 0), seq.size - 1)])
        if value < 0:
            raise ValidationError(f"negative rate {value} at t={t}")
        return value

    def beta_at(self, t: float, day: int) -> float:
        return self._at(self.beta, t, day)

    def r_at(self, t: float, day: int) -> float:
        return self._at(self.r, t, day)


@dataclass(frozen=True)
class SEIRState:
    S: float
    E: float
    I: float
    R: float
    D: float
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.S, self.E, self.I, self.R, self.D], dtype=float)

    @property
    def total(self) -> float:
        return self.S + self.E + self.I + self.R + self.D


class SEIRTrajectory(Sequence):
    """Daily samples of an integration; indexing yields :class:`SEIRState`."""

    def __init__(self, t: np.ndarray, states: np.ndarray):
        self.t = t
        self.states = states

    def __len__(self):
        return self.t.size

    def __getitem__(self, i):
        if isinstance(i, slice):
            return SEIRTrajectory(self.t[i], self.states[i])
        s = self.states[i]
        return SEIRState(*map(float, s), t=float(self.t[i]))

    S = property(lambda self: self.states[:, 0])
    E = property(lambda self: self.states[:, 1])
    I = property(lambda self: self.states[:, 2])
    R = property(lambda self: self.states[:, 3])
    D = property(lambda self: self.states[:, 4])

    @property
    def totals(self) -> np.ndarray:
        return self.states.sum(axis=1)


def _rhs(x: np.ndarray, beta: float, r: float, p: SEIRParams) -> np.ndarray:
    s, e, i, _, _ = x
    infection = beta * i * s / p.N
    return np.array([
        -infection,
        infection - p.delta * e,
        p.delta * e - (r + p.gamma) * i,
        p.gamma * i,
        r * i,
    ])


def seir_integrate(params: SEIRParams, initial: SEIRState, days: int, step: float = 0.1) -> SEIRTrajectory:
    """Fixed-step RK4, sampled at whole days ``0..days``.

    ``1/step`` must be a whole number so that samples fall exactly on days.
    """
    if not 0 < step <= 1:
        raise ValidationError("step must lie in (0, 1]")
    per_day = round(1.0 / step)
    if abs(per_day * step - 1.0) > 1e-9:
        raise ValidationError(f"1/step must be an integer, got step={step}")
    h = 1.0 / per_day
    x = initial.as_array()
    if np.any(x < 0):
        raise ValidationError("initial compartments must be non-negative")
    if abs(x.sum() - params.N) > 1e-9 * params.N:
        raise ValidationError(f"initial state sums to {x.sum()}, not N={params.N}")
    floor = -1e-9 * params.N
    out = np.empty((days + 1, 5))
    out[0] = x
    t0 = initial.t
    for d in range(days):
        for k in range(per_day):
            t = t0 + d + k * h
            b = params.beta_at(t, d)
            rr = params.r_at(t, d)
            if callable(params.beta) or callable(params.r):
                b2, r2 = params.beta_at(t + h / 2, d), params.r_at(t + h / 2, d)
                b4, r4 = params.beta_at(t + h, d), params.r_at(t + h, d)
            else:
                b2, r2, b4, r4 = b, rr, b, rr
            k1 = _rhs(x, b, rr, params)
            k2 = _rhs(x + 0.5 * h * k1, b2, r2, params)
            k3 = _rhs(x + 0.5 * h * k2, b2, r2, params)
            k4 = _rhs(x + h * k3, b4, r4, params)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if np.any(x < floor):
                raise IntegratorError(f"negative compartment {x.min():.3e} at t={t + h:.3f}")
        out[d + 1] = x
    return SEIRTrajectory(t0 + np.arange(days + 1, dtype=float), out)


def reproduction_number(beta, S, r, gamma, N):
    """``beta S / (N (r + gamma))``; works elementwise on arrays."""
    beta, S, r = (np.asarray(v, dtype=float) for v in (beta, S, r))
    den = r + gamma
    if np.any(den == 0):
        raise NumericalError("r + gamma is zero")
    if np.any(S < 0) or np.any(S > N):
        raise ValidationError("S must lie in [0, N]")
    rn = beta * (S / N) / den
    return float(rn) if rn.ndim == 0 else rn


@dataclass(frozen=True)
class RateSeries:
    beta: TimeSeries
    r: TimeSeries
    rn: TimeSeries
    susceptible: TimeSeries | None = field(default=None, repr=False)

    def to_dataset(self) -> Dataset:
        """Columns ``beta, r, rn``; ``rn`` carries the output role."""
        return Dataset(
            {"beta": self.beta, "r": self.r, "rn": self.rn},
            {"beta": INPUT, "r": INPUT, "rn": OUTPUT},
        )


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, TimeSeries) else x, dtype=float)


def _to_days(interval: np.ndarray) -> np.ndarray:
    """Label the interval ``t -> t+1`` with day ``t``; the last day repeats."""
    return np.append(interval, interval[-1])


def estimate_rates(
    active,
    deaths,
    N: float,
    delta: float = 1.0 / LATENT_DAYS,
    gamma: float = 1.0 / INFECTIOUS_DAYS,
    recovered0: float = 0.0,
    scheme: str = "trapezoid",
) -> RateSeries:
    """Recover ``beta(t)``, ``r(t)`` and ``RN(t)`` from active infections and cumulative deaths.

    Deaths give the lethality directly, ``r = dD / integral(I)`` per day.
    The other compartments are rebuilt from the model: ``R`` integrates
    ``gamma I``, ``E = (I' + (r + gamma) I) / delta``, and the susceptible
    pool is what conservation leaves, ``S = N - (E + I + R + D)``. Then
    ``beta = -N dS / integral(I S)`` per day.

    With ``scheme="trapezoid"`` (default) the daily integrals use the
    trapezoid rule; ``scheme="forward"`` uses the left endpoint only.
    Both series are floored at zero.
    """
    I = _values(active)
    D = _values(deaths)
    start = active.start_day if isinstance(active, TimeSeries) else 0
    if I.shape != D.shape or I.size < 3:
        raise DataError("active and deaths need equal length of at least 3 days")
    if scheme not in ("trapezoid", "forward"):
        raise ValidationError(f"unknown scheme {scheme!r}")
    zero = np.flatnonzero(I <= 0)
    if zero.size:
        raise DataError(f"no active infections on day {int(zero[0])} of the estimation window")
    drop = np.flatnonzero(np.diff(D) < 0)
    if drop.size:
        raise DataError(f"cumulative deaths decrease after day {int(drop[0])}")

    def integral(x):
        return 0.5 * (x[:-1] + x[1:]) if scheme == "trapezoid" else x[:-1]

    r_int = np.diff(D) / integral(I)
    r_day = _to_days(r_int)
    R = recovered0 + gamma * np.concatenate([[0.0], np.cumsum(0.5 * (I[:-1] + I[1:]))])
    E = np.maximum((np.gradient(I) + (r_day + gamma) * I) / delta, 0.0)
    S = N - (E + I + R + D)
    if np.any(S <= 0):
        raise DataError("reconstructed susceptible pool is not positive; check N and the data")
    beta_int = np.maximum(-N * np.diff(S) / integral(I * S), 0.0)
    beta_day = _to_days(beta_int)
    r_day = np.maximum(r_day, 0.0)
    rn = reproduction_number(beta_day, S, r_day, gamma, N)
    return RateSeries(
        TimeSeries("beta", start, beta_day),
        TimeSeries("r", start, r_day),
        TimeSeries("rn", start, rn),
        TimeSeries("S", start, S),
    )


def derive_rn(
    cases,
    deaths,
    N: float,
    latent_days: float = LATENT_DAYS,
    infectious_days: float = INFECTIOUS_DAYS,
    active_window: int = 14,
    smooth_window: int | None = 7,
    clip_negative: bool = False,
) -> RateSeries:
    """Daily R-number from daily new cases and daily deaths.

    Active infections are the new cases of the trailing ``active_window``
    days; cumulative deaths are the running sum of daily deaths. ``beta``
    and ``r`` are smoothed with a centred moving average of
    ``smooth_window`` days (``None`` for raw) before ``RN`` is formed.
    """
    c = _values(cases)
    d = _values(deaths)
    start = cases.start_day if isinstance(cases, TimeSeries) else 0
    if clip_negative:
        c, d = np.maximum(c, 0.0), np.maximum(d, 0.0)
    elif np.any(c < 0) or np.any(d < 0):
        raise DataError("negative daily counts; set clip_negative to clip them to zero")
    gamma = 1.0 / infectious_days
    active = TimeSeries("I", start, trailing_sum(c, active_window))
    raw = estimate_rates(active, np.cumsum(d), N, 1.0 / latent_days, gamma)
    if not smooth_window or smooth_window == 1:
        return raw
    beta = centered_moving_average(raw.beta.values, smooth_window)
    r = centered_moving_average(raw.r.values, smooth_window)
    rn = reproduction_number(beta, raw.susceptible.values, r, gamma, N)
    return RateSeries(
        TimeSeries("beta", start, beta),
        TimeSeries("r", start, r),
        TimeSeries("rn", start, rn),
        raw.susceptible,
    )
