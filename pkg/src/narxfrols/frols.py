"""Forward regression with orthogonal least squares (FROLS).

Terms are chosen greedily by error reduction ratio (ERR), the non-centred
squared correlation between the target and each candidate after the
candidate has been orthogonalised against the terms already chosen.
Orthogonalisation is modified Gram-Schmidt with a second
(re-orthogonalisation) pass. Parameters follow from the unit upper
triangular system ``R theta = g`` built during orthogonalisation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .data import Dataset, SplitSpec, split
from .dictionary import LagSpec, RegressionProblem, Term, build_dictionary, evaluate
from .errors import (
    ConditioningError,
    DataError,
    DegenerateTargetError,
    UndefinedCorrelationError,
    ValidationError,
)

CRITERIA = ("aic", "bic", "gcv", "apress", "fixed")

# ERR values closer than this are treated as tied; the lowest index wins.
TIE_TOL = 1e-14
# Relative residual energy below which the target counts as exactly fitted.
EXACT_FIT_RTOL = 1e-20


@dataclass(frozen=True)
class SelectionConfig:
    """Stopping and model-size rules for FROLS.

    Exactly one rule decides the final size: ``err_sum_threshold`` (only
    allowed with ``size_criterion="fixed"``), a fixed ``max_terms``, or the
    minimum of an information criterion over the trace.
    """

    max_terms: int = 20
    err_sum_threshold: float | None = None
    size_criterion: str = "apress"
    collinearity_tol: float = 1e-10
    n_folds: int = 10
    apress_alpha: float = 5.0
    fast: bool = False

    def __post_init__(self):
        crit = str(self.size_criterion).lower()
        object.__setattr__(self, "size_criterion", crit)
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise ValidationError(f"max_terms must be a positive integer, got {self.max_terms!r}")
        if crit not in CRITERIA:
            raise ValidationError(f"unknown size criterion {self.size_criterion!r}; expected one of {CRITERIA}")
        if self.err_sum_threshold is not None:
            if not 0.0 < self.err_sum_threshold <= 1.0:
                raise ValidationError("err_sum_threshold must lie in (0, 1]")
            if crit != "fixed":
                raise ValidationError(
                    "err_sum_threshold and an information criterion cannot both decide the size; "
                    "use size_criterion='fixed' with a threshold"
                )
        if not self.collinearity_tol > 0:
            raise ValidationError("collinearity_tol must be positive")
        if int(self.n_folds) != self.n_folds or self.n_folds < 1:
            raise ValidationError("n_folds must be a positive integer")
        if not self.apress_alpha > 0:
            raise ValidationError("apress_alpha must be positive")

    @property
    def stopping_rule(self) -> str:
        if self.err_sum_threshold is not None:
            return "threshold"
        return "fixed" if self.size_criterion == "fixed" else "criterion"


@dataclass(frozen=True)
class SelectionStep:
    index: int
    err: float
    residual_energy: float
    g: float


@dataclass(frozen=True)
class SelectionTrace:
    steps: tuple[SelectionStep, ...]
    target_energy: float
    n_rows: int
    stop_reason: str = "max_terms"
    collinearity_tol: float = 1e-10
    basis: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.steps)

    @property
    def indices(self) -> list[int]:
        return [s.index for s in self.steps]

    @property
    def errs(self) -> np.ndarray:
        return np.array([s.err for s in self.steps])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.residual_energy for s in self.steps])

    @property
    def collinear_stop(self) -> bool:
        return self.stop_reason == "collinear"

    def truncated(self, n: int) -> "SelectionTrace":
        basis = None if self.basis is None else self.basis[:, :n]
        return replace(self, steps=self.steps[:n], basis=basis)


def squared_correlation(x, y) -> float:
    """Non-centred squared correlation ``(x'y)^2 / ((x'x)(y'y))``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 1:
        raise ValidationError("vectors must be one-dimensional with equal, non-zero length")
    xx, yy = float(x @ x), float(y @ y)
    if xx == 0.0 or yy == 0.0:
        raise UndefinedCorrelationError("squared correlation undefined for a zero-norm vector")
    xy = float(x @ y)
    return xy * xy / (xx * yy)


def _project_out(w: np.ndarray, basis: np.ndarray, basis_energy: np.ndarray, passes: int = 2):
    """Remove the components of ``w`` (vector or matrix) along each basis column, MGS order."""
    for _ in range(passes):
        for k in range(basis.shape[1]):
            q = basis[:, k]
            coef = (q @ w) / basis_energy[k]
            w -= np.multiply.outer(q, coef)
    return w


def _argmax_lowest(values: np.ndarray, candidates: np.ndarray) -> int:
    best = values.max()
    tied = candidates[values >= best - TIE_TOL]
    return int(tied.min())


def frols_select(problem: RegressionProblem, config: SelectionConfig | None = None) -> SelectionTrace:
    """Run the forward selection and return the per-step trace.

    The search stops at ``config.max_terms`` (capped by the number of
    candidates and ``N_eff - 1``), when the ERR sum passes the threshold,
    when the target is fitted exactly, or when every remaining candidate is
    collinear with the selected set (``stop_reason == "collinear"``).
    """
    config = config or SelectionConfig()
    phi = np.asarray(problem.columns, dtype=float)
    y = np.asarray(problem.target, dtype=float)
    n_rows, n_cand = phi.shape
    if n_cand < 1:
        raise ValidationError("no candidate terms")
    yy = float(y @ y)
    if yy == 0.0:
        raise DegenerateTargetError("target vector is identically zero")
    limit = min(config.max_terms, n_cand, n_rows - 1)
    if limit < 1:
        raise DataError(f"not enough rows ({n_rows}) to select any term")

    col_energy = np.einsum("ij,ij->j", phi, phi)
    alive = col_energy > 0.0
    basis = np.empty((n_rows, 0))
    basis_energy = np.empty(0)
    residual = y.copy()
    steps: list[SelectionStep] = []
    err_sum = 0.0
    stop = "max_terms"
    work = phi.copy() if config.fast else None

    for _ in range(limit):
        cand = np.flatnonzero(alive)
        if cand.size == 0:
            stop = "collinear"
            break
        if config.fast:
            w = work[:, cand]
        else:
            w = _project_out(phi[:, cand].copy(), basis, basis_energy)
        w_energy = np.einsum("ij,ij->j", w, w)
        ok = w_energy > config.collinearity_tol * col_energy[cand]
        alive[cand[~ok]] = False
        if not ok.any():
            stop = "collinear"
            break
        cand, w, w_energy = cand[ok], w[:, ok], w_energy[ok]
        yw = y @ w
        err = yw * yw / (w_energy * yy)
        pick = _argmax_lowest(err, cand)
        pos = int(np.searchsorted(cand, pick))
        q = w[:, pos].copy()
        qq = float(w_energy[pos])
        yq = float(y @ q)
        g = yq / qq
        residual -= g * q
        energy = float(residual @ residual)
        step_err = yq * yq / (qq * yy)
        steps.append(SelectionStep(pick, step_err, energy, g))
        err_sum += step_err
        basis = np.column_stack([basis, q])
        basis_energy = np.append(basis_energy, qq)
        alive[pick] = False
        if config.fast:
            rest = np.flatnonzero(alive)
            work[:, rest] = _project_out(work[:, rest], q[:, None], np.array([qq]))
        if config.err_sum_threshold is not None and err_sum >= config.err_sum_threshold:
            stop = "threshold"
            break
        if energy <= EXACT_FIT_RTOL * yy:
            stop = "exact_fit"
            break

    if not steps:
        raise ConditioningError("every candidate column is zero or collinear", step=1)
    return SelectionTrace(tuple(steps), yy, n_rows, stop, config.collinearity_tol, basis)


@dataclass(frozen=True)
class Decomposition:
    """``A = Q R`` with orthogonal (not normalised) ``Q`` and unit upper triangular ``R``."""

    q: np.ndarray
    r: np.ndarray
    q_energy: np.ndarray
    g: np.ndarray


def orthogonal_decomposition(columns: np.ndarray, target: np.ndarray, tol: float = 1e-10) -> Decomposition:
    a = np.asarray(columns, dtype=float)
    y = np.asarray(target, dtype=float)
    n_rows, n = a.shape
    q = np.empty((n_rows, n))
    r = np.eye(n)
    qq = np.empty(n)
    for k in range(n):
        w = a[:, k].copy()
        for _ in range(2):
            for i in range(k):
                c = (q[:, i] @ w) / qq[i]
                w -= c * q[:, i]
                r[i, k] += c
        qq[k] = w @ w
        if not qq[k] > tol * (a[:, k] @ a[:, k]):
            raise ConditioningError(
                f"selected term {k + 1} is numerically dependent on the terms before it", step=k + 1
            )
        q[:, k] = w
    g = (y @ q) / qq
    return Decomposition(q, r, qq, g)


def back_substitute(r: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve ``r theta = g`` for upper triangular ``r``."""
    n = g.size
    theta = np.zeros(n)
    for k in range(n - 1, -1, -1):
        if r[k, k] == 0.0:
            raise ConditioningError(f"zero pivot at step {k + 1}", step=k + 1)
        theta[k] = (g[k] - r[k, k + 1 :] @ theta[k + 1 :]) / r[k, k]
    return theta


def estimate_parameters(problem: RegressionProblem, trace: SelectionTrace | Sequence[int]) -> np.ndarray:
    idx = trace.indices if isinstance(trace, SelectionTrace) else list(trace)
    if not idx:
        raise ValidationError("no selected terms to estimate")
    tol = trace.collinearity_tol if isinstance(trace, SelectionTrace) else 1e-10
    dec = orthogonal_decomposition(problem.columns[:, idx], problem.target, tol)
    return back_substitute(dec.r, dec.g)


def forced_trace(problem: RegressionProblem, indices: Sequence[int], tol: float = 1e-10) -> SelectionTrace:
    """Trace for a given term order (no search), e.g. to refit a chosen structure."""
    idx = list(indices)
    y = problem.target
    yy = float(y @ y)
    if yy == 0.0:
        raise DegenerateTargetError("target vector is identically zero")
    dec = orthogonal_decomposition(problem.columns[:, idx], y, tol)
    residual = y.copy()
    steps = []
    for k, j in enumerate(idx):
        q = dec.q[:, k]
        yq = float(y @ q)
        residual -= dec.g[k] * q
        steps.append(SelectionStep(j, yq * yq / (dec.q_energy[k] * yy), float(residual @ residual), float(dec.g[k])))
    return SelectionTrace(tuple(steps), yy, problem.n_rows, "forced", tol, dec.q)


def criterion_curve(
    energies: Sequence[float], criterion: str, n_eff: int, apress_alpha: float = 5.0
) -> np.ndarray:
    """Criterion value for model sizes ``1..len(energies)``."""
    e = np.asarray(energies, dtype=float)
    n = np.arange(1, e.size + 1)
    mse = e / n_eff
    crit = criterion.lower()
    with np.errstate(divide="ignore", invalid="ignore"):
        if crit == "aic":
            return n_eff * np.log(mse) + 2 * n
        if crit == "bic":
            return n_eff * np.log(mse) + n * math.log(n_eff)
        if crit in ("gcv", "apress"):
            alpha = 1.0 if crit == "gcv" else apress_alpha
            shrink = 1.0 - alpha * n / n_eff
            return np.where(shrink > 0, mse / np.where(shrink > 0, shrink, 1.0) ** 2, np.inf)
    raise ValidationError(f"no criterion curve for {criterion!r}")


def select_model_size(
    trace: SelectionTrace,
    criterion: str,
    n_eff: int,
    max_terms: int | None = None,
    apress_alpha: float = 5.0,
) -> int:
    """Number of leading trace steps to keep."""
    if len(trace) == 0:
        raise ValidationError("empty selection trace")
    if criterion.lower() == "fixed":
        return min(len(trace), max_terms if max_terms is not None else len(trace))
    curve = criterion_curve(trace.energies, criterion, n_eff, apress_alpha)
    if np.all(np.isinf(curve) & (curve > 0)):
        return len(trace)
    return int(np.argmin(curve)) + 1


@dataclass(frozen=True)
class FoldResult:
    fold: int
    held_out: tuple[int, int]
    indices: tuple[int, ...]
    held_out_mse: float


@dataclass(frozen=True)
class IdentifiedModel:
    """A fitted polynomial NARX model and its selection statistics."""

    terms: tuple[Term, ...]
    parameters: np.ndarray
    err: np.ndarray
    p_values: np.ndarray
    spec: LagSpec
    n_eff: int = 0
    residual_variance: float = float("nan")
    max_abs_output: float = float("nan")
    trace: SelectionTrace | None = field(default=None, repr=False, compare=False)
    folds: tuple[FoldResult, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for name in ("parameters", "err", "p_values"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        n = len(self.terms)
        if not (self.parameters.size == self.err.size == self.p_values.size == n):
            raise ValidationError("terms, parameters, err and p_values must have equal length")

    def __len__(self):
        return len(self.terms)

    @property
    def has_autoregression(self) -> bool:
        return any(t.uses(self.spec.output) for t in self.terms)

    @property
    def horizon_days(self) -> int:
        return min((t.min_lag for t in self.terms if not t.is_constant), default=0)

    def equation(self) -> str:
        parts = []
        for th, t in zip(self.parameters, self.terms):
            parts.append(f"{th:+.4e}" + ("" if t.is_constant else f"*{t}"))
        return f"{self.spec.output}(t) = " + " ".join(parts)

    def report_rows(self) -> list[list[str]]:
        rows = []
        for i, (t, th, e, p) in enumerate(zip(self.terms, self.parameters, self.err, self.p_values), start=1):
            rows.append([str(i), str(t), f"{th:.4e}", f"{100.0 * e:.4f}", "0" if p == 0 else f"{p:.4e}"])
        return rows

    def report_csv(self, comments: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in comments:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(self.report_rows())
        return buf.getvalue()

    def report_text(self, comments: Sequence[str] = ()) -> str:
        rows = [list(REPORT_COLUMNS)] + self.report_rows()
        widths = [max(len(r[c]) for r in rows) for c in range(len(REPORT_COLUMNS))]
        lines = [f"# {c}" for c in comments]
        for r in rows:
            cells = [r[0].rjust(widths[0]), r[1].ljust(widths[1])] + [
                r[c].rjust(widths[c]) for c in range(2, len(r))
            ]
            lines.append("  ".join(cells).rstrip())
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "terms": [t.to_list() for t in self.terms],
            "parameters": [float(x) for x in self.parameters],
            "err": [float(x) for x in self.err],
            "p_values": [float(x) for x in self.p_values],
            "n_eff": int(self.n_eff),
            "residual_variance": float(self.residual_variance),
            "max_abs_output": float(self.max_abs_output),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IdentifiedModel":
        return cls(
            tuple(Term.from_list(t) for t in d["terms"]),
            np.array(d["parameters"], dtype=float),
            np.array(d["err"], dtype=float),
            np.array(d["p_values"], dtype=float),
            LagSpec.from_dict(d["spec"]),
            int(d["n_eff"]),
            float(d["residual_variance"]),
            float(d["max_abs_output"]),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "IdentifiedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


REPORT_COLUMNS = ("Index", "Model Term", "Parameter", "ERR(100%)", "P-value")


def _column_indices(problem: RegressionProblem, terms: Sequence[Term]) -> list[int]:
    lookup = {t: i for i, t in enumerate(problem.terms)}
    try:
        return [lookup[t] for t in terms]
    except KeyError as exc:
        raise ValidationError(f"term {exc.args[0]} is not a column of the regression problem") from None


def compute_p_values(problem: RegressionProblem, model: IdentifiedModel) -> np.ndarray:
    """Two-sided t-test p-values of each parameter from an OLS refit."""
    idx = _column_indices(problem, model.terms)
    n_rows, n = problem.n_rows, len(idx)
    if n_rows <= n:
        raise DataError(f"need more rows ({n_rows}) than terms ({n}) for p-values")
    a = problem.columns[:, idx]
    dec = orthogonal_decomposition(a, problem.target)
    theta = np.asarray(model.parameters, dtype=float)
    resid = problem.target - a @ theta
    dof = n_rows - n
    sigma2 = float(resid @ resid) / dof
    # (A'A)^-1 = R^-1 D^-1 R^-T with D = diag(q'q)
    r_inv = np.linalg.solve(dec.r, np.eye(n))
    cov_diag = sigma2 * np.einsum("ij,j,ij->i", r_inv, 1.0 / dec.q_energy, r_inv)
    se = np.sqrt(np.maximum(cov_diag, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stat = np.abs(theta) / se
    t_stat = np.where(se == 0.0, np.where(theta == 0.0, 0.0, np.inf), t_stat)
    return 2.0 * stats.t.sf(t_stat, dof)


def _subset_fit_mse(train: RegressionProblem, test: RegressionProblem, idx: Sequence[int], tol: float) -> float:
    try:
        theta = estimate_parameters(train, list(idx))
    except ConditioningError:
        return math.inf
    resid = test.target - test.columns[:, list(idx)] @ theta
    return float(resid @ resid) / max(test.n_rows, 1)


def _select_indices(problem: RegressionProblem, config: SelectionConfig) -> list[int]:
    trace = frols_select(problem, config)
    n = select_model_size(trace, config.size_criterion, problem.n_rows, config.max_terms, config.apress_alpha)
    return trace.indices[:n]


def cross_validate_structure(problem: RegressionProblem, config: SelectionConfig) -> tuple[list[int], tuple[FoldResult, ...]]:
    """Choose a term set by contiguous-block cross-validation.

    Selection runs once per fold with that fold's block held out. Every
    distinct term set found this way is scored by its mean held-out MSE
    over all folds; the lowest score wins (ties go to the smaller set, then
    to the earliest fold).
    """
    blocks = np.array_split(np.arange(problem.n_rows), config.n_folds)
    splits = []
    for block in blocks:
        mask = np.ones(problem.n_rows, dtype=bool)
        mask[block] = False
        splits.append((problem.rows(mask), problem.rows(~mask), block))
    folds = []
    for k, (train, test, block) in enumerate(splits):
        idx = tuple(_select_indices(train, config))
        mse = _subset_fit_mse(train, test, idx, config.collinearity_tol)
        folds.append(FoldResult(k, (int(block[0]), int(block[-1]) + 1), idx, mse))
    best_key, best_idx = None, None
    seen = set()
    for fold in folds:
        key_set = fold.indices
        if key_set in seen:
            continue
        seen.add(key_set)
        score = float(np.mean([_subset_fit_mse(tr, te, key_set, config.collinearity_tol) for tr, te, _ in splits]))
        key = (score, len(key_set))
        if best_key is None or key < best_key:
            best_key, best_idx = key, list(key_set)
    return best_idx, tuple(folds)


def fit_structure(problem: RegressionProblem, indices: Sequence[int], spec: LagSpec,
                  tol: float = 1e-10, folds: tuple[FoldResult, ...] = ()) -> IdentifiedModel:
    """Refit a chosen term order on ``problem`` and attach ERR and p-values."""
    trace = forced_trace(problem, indices, tol)
    theta = estimate_parameters(problem, trace)
    resid = problem.target - problem.columns[:, list(indices)] @ theta
    dof = max(problem.n_rows - len(indices), 1)
    model = IdentifiedModel(
        tuple(problem.terms[i] for i in indices),
        theta,
        trace.errs,
        np.full(len(indices), np.nan),
        spec,
        problem.n_rows,
        float(resid @ resid) / dof,
        float(np.max(np.abs(problem.target))),
        trace,
        folds,
    )
    p = compute_p_values(problem, model) if problem.n_rows > len(indices) else np.full(len(indices), np.nan)
    return replace(model, p_values=p)


def identify(dataset: Dataset, spec: LagSpec, config: SelectionConfig | None = None,
             split_spec: SplitSpec | None = None) -> IdentifiedModel:
    """Identify a model on the training portion of ``dataset``."""
    config = config or SelectionConfig()
    train = split(dataset, split_spec)[0] if split_spec is not None else dataset
    problem = evaluate(build_dictionary(spec), train)
    folds: tuple[FoldResult, ...] = ()
    if config.n_folds >= 2 and problem.n_rows >= 2 * config.n_folds:
        indices, folds = cross_validate_structure(problem, config)
    else:
        indices = _select_indices(problem, config)
    return fit_structure(problem, indices, spec, config.collinearity_tol, folds)
