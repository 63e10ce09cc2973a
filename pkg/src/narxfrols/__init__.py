"""Sparse polynomial NARX identification by forward orthogonal regression,
with an SEIR-D toolkit for reconstructing the reproduction number."""

__version__ = "0.1.0"

from .data import Dataset, SplitSpec, TimeSeries, ingest_csv, split, write_csv
from .dictionary import LagSpec, Term, build_dictionary, evaluate
from .epi import SEIRParams, SEIRState, derive_rn, estimate_rates, reproduction_number, seir_integrate
from .errors import DataError, NumericalError, NarxError, ValidationError
from .frols import IdentifiedModel, SelectionConfig, estimate_parameters, frols_select, identify
from .predict import free_run_simulate, one_step_predict, r_square, residual_diagnostics

__all__ = [
    "Dataset", "SplitSpec", "TimeSeries", "ingest_csv", "split", "write_csv",
    "LagSpec", "Term", "build_dictionary", "evaluate",
    "SEIRParams", "SEIRState", "derive_rn", "estimate_rates", "reproduction_number", "seir_integrate",
    "DataError", "NumericalError", "NarxError", "ValidationError",
    "IdentifiedModel", "SelectionConfig", "estimate_parameters", "frols_select", "identify",
    "free_run_simulate", "one_step_predict", "r_square", "residual_diagnostics",
]
