"""Polynomial candidate terms over lagged variables.

A dictionary holds every monomial of total degree ``1..degree`` (plus the
constant) over the lagged variables named in a :class:`LagSpec`. Terms are
ordered by degree, then lexicographically over the lagged-variable order of
the :class:`LagSpec`, so that ``y(t-1), u(t-1)`` with degree 3 yields::

    y(t-1), u(t-1), y(t-1)^2, u(t-1)*y(t-1), u(t-1)^2, y(t-1)^3, ...
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .errors import DataError, ValidationError


@dataclass(frozen=True)
class VariableLags:
    """Lags ``min_lag..max_lag`` (inclusive) of one variable."""

    name: str
    min_lag: int
    max_lag: int

    def __post_init__(self):
        if self.min_lag < 0 or self.max_lag < self.min_lag:
            raise ValidationError(
                f"invalid lag range {self.min_lag}..{self.max_lag} for {self.name!r}"
            )

    @property
    def lags(self) -> range:
        return range(self.min_lag, self.max_lag + 1)


@dataclass(frozen=True)
class LagSpec:
    output: str
    variables: tuple[VariableLags, ...] = ()
    degree: int = 1
    include_constant: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValidationError(f"degree must be a non-negative integer, got {self.degree!r}")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValidationError(f"variable listed twice in lag spec: {names}")
        for v in self.variables:
            if v.name == self.output and v.min_lag < 1:
                raise ValidationError("the output variable cannot enter at lag 0")

    @classmethod
    def narx(
        cls,
        output: str,
        inputs: Mapping[str, tuple[int, int]],
        output_lags: tuple[int, int] | None = None,
        degree: int = 1,
        include_constant: bool = True,
    ) -> "LagSpec":
        """Build a spec with the output's lags first, then the inputs in order."""
        variables = []
        if output_lags is not None:
            variables.append(VariableLags(output, *output_lags))
        variables.extend(VariableLags(name, lo, hi) for name, (lo, hi) in inputs.items())
        return cls(output, tuple(variables), degree, include_constant)

    @property
    def max_lag(self) -> int:
        return max((v.max_lag for v in self.variables), default=0)

    @property
    def lagged_variables(self) -> list[tuple[str, int]]:
        return [(v.name, lag) for v in self.variables for lag in v.lags]

    @property
    def input_names(self) -> list[str]:
        return [v.name for v in self.variables if v.name != self.output]

    def to_dict(self) -> dict:
        return {
            "output": self.output,
            "variables": [[v.name, v.min_lag, v.max_lag] for v in self.variables],
            "degree": self.degree,
            "include_constant": self.include_constant,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LagSpec":
        return cls(
            d["output"],
            tuple(VariableLags(n, int(lo), int(hi)) for n, lo, hi in d["variables"]),
            int(d["degree"]),
            bool(d["include_constant"]),
        )


def _render_factor(name: str, lag: int) -> str:
    return f"{name}(t)" if lag == 0 else f"{name}(t-{lag})"


@dataclass(frozen=True, order=True)
class Term:
    """A monomial: a multiset of ``(variable, lag)`` factors.

    Factors are kept sorted by variable name then lag, so two terms built
    from the same factors in any order compare equal. The empty term is the
    constant.
    """

    factors: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "factors", tuple(sorted((str(n), int(l)) for n, l in self.factors))
        )

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "Term":
        return cls(tuple(factors))

    @property
    def degree(self) -> int:
        return len(self.factors)

    @property
    def is_constant(self) -> bool:
        return not self.factors

    @property
    def min_lag(self) -> int | None:
        return min((l for _, l in self.factors), default=None)

    @property
    def max_lag(self) -> int:
        return max((l for _, l in self.factors), default=0)

    def uses(self, name: str) -> bool:
        return any(n == name for n, _ in self.factors)

    def __str__(self):
        if self.is_constant:
            return "constant"
        parts = []
        for (name, lag), k in Counter(self.factors).items():
            f = _render_factor(name, lag)
            parts.append(f if k == 1 else f"{f}^{k}")
        return "*".join(parts)

    def to_list(self) -> list:
        return [[n, l] for n, l in self.factors]

    @classmethod
    def from_list(cls, factors: Iterable) -> "Term":
        return cls(tuple((n, int(l)) for n, l in factors))


@dataclass(frozen=True)
class Dictionary:
    terms: tuple[Term, ...]
    spec: LagSpec

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(set(self.terms)) != len(self.terms):
            raise ValidationError("dictionary contains duplicate terms")

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __getitem__(self, i):
        return self.terms[i]

    def index(self, term: Term) -> int:
        return self.terms.index(term)


def expected_size(spec: LagSpec) -> int:
    n = len(spec.lagged_variables)
    return math.comb(n + spec.degree, spec.degree) - (0 if spec.include_constant else 1)


def build_dictionary(spec: LagSpec) -> Dictionary:
    lagged = spec.lagged_variables
    if expected_size(spec) == 0:
        raise ValidationError("empty dictionary: no candidate terms and no constant")
    terms = [Term()] if spec.include_constant else []
    for degree in range(1, spec.degree + 1):
        for combo in itertools.combinations_with_replacement(range(len(lagged)), degree):
            terms.append(Term(tuple(lagged[i] for i in combo)))
    return Dictionary(tuple(terms), spec)


@dataclass(frozen=True)
class RegressionProblem:
    """Evaluated dictionary: ``columns[i, m]`` is term ``m`` at ``t = first_valid_t + i``."""

    columns: np.ndarray
    target: np.ndarray
    first_valid_t: int
    terms: tuple[Term, ...]
    start_day: int = 0

    @property
    def n_rows(self) -> int:
        return self.columns.shape[0]

    @property
    def n_terms(self) -> int:
        return self.columns.shape[1]

    def rows(self, index) -> "RegressionProblem":
        """Row subset (used for cross-validation folds)."""
        return RegressionProblem(
            self.columns[index], self.target[index], self.first_valid_t, self.terms, self.start_day
        )

    def restrict(self, indices: Sequence[int]) -> "RegressionProblem":
        idx = list(indices)
        return RegressionProblem(
            self.columns[:, idx],
            self.target,
            self.first_valid_t,
            tuple(self.terms[i] for i in idx),
            self.start_day,
        )


def term_values(term: Term, dataset: Dataset, first: int, stop: int | None = None) -> np.ndarray:
    """Values of ``term`` for ``t = first .. stop-1`` (``stop`` defaults to the end)."""
    n = len(dataset)
    stop = n if stop is None else stop
    col = np.ones(stop - first)
    for name, lag in term.factors:
        if name not in dataset:
            raise DataError(f"dataset has no series named {name!r}")
        if first - lag < 0:
            raise DataError(f"term {term} needs data before the start of the series")
        col = col * dataset[name][first - lag : stop - lag]
    return col


def evaluate(dictionary: Dictionary | Sequence[Term], dataset: Dataset, spec: LagSpec | None = None) -> RegressionProblem:
    """Evaluate every term on ``dataset`` for ``t = max_lag .. N-1``.

    For a full :class:`Dictionary` the first row is the lag spec's maximum lag,
    so every candidate sees the same rows. A plain sequence of terms starts
    at the largest lag among those terms; ``spec`` then only names the
    output (default: the dataset's output series).
    """
    if isinstance(dictionary, Dictionary):
        terms, spec = dictionary.terms, dictionary.spec
        output = spec.output
        names = {output} | {v.name for v in spec.variables}
        first = spec.max_lag
    else:
        terms = tuple(dictionary)
        output = spec.output if spec is not None else dataset.output_name
        names = {output}
        first = 0
    names |= {n for t in terms for n, _ in t.factors}
    missing = sorted(n for n in names if n not in dataset)
    if missing:
        raise DataError(f"dataset lacks variable(s) {missing}")
    first = max(first, max((t.max_lag for t in terms), default=0))
    if len(dataset) < first + 1:
        raise DataError(
            f"dataset of length {len(dataset)} is too short for maximum lag {first}"
        )
    columns = np.empty((len(dataset) - first, len(terms)))
    for m, term in enumerate(terms):
        columns[:, m] = term_values(term, dataset, first)
    target = np.array(dataset[output][first:], dtype=float)
    return RegressionProblem(columns, target, first, tuple(terms), dataset.start_day)
