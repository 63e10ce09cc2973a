"""Pipeline configuration stored as TOML.

Unknown keys are rejected at every level so that typos fail loudly.
Optional values are simply left out of the file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import SplitSpec
from .dictionary import LagSpec
from .errors import DataError, ValidationError
from .frols import SelectionConfig

CASES = ("cs1", "cs2", "cs3")


@dataclass(frozen=True)
class DataConfig:
    path: str = "data/uk_covid.csv"
    date_column: str = "date"
    cases_column: str = "cases"
    deaths_column: str = "deaths"
    fill: str = "none"
    rn_path: str | None = None

    def __post_init__(self):
        if self.fill not in ("none", "forward"):
            raise ValidationError(f"data.fill must be 'none' or 'forward', got {self.fill!r}")


@dataclass(frozen=True)
class EpiConfig:
    population: float = 67_886_011.0
    latent_days: float = 5.0
    infectious_days: float = 14.0
    active_window: int = 14
    smooth_window: int = 7
    clip_negative: bool = False

    def __post_init__(self):
        if not (self.population > 0 and self.latent_days > 0 and self.infectious_days > 0):
            raise ValidationError("epi.population, latent_days and infectious_days must be positive")
        if self.active_window < 1 or self.smooth_window < 1 or self.smooth_window % 2 == 0:
            raise ValidationError("epi.active_window must be >= 1 and epi.smooth_window a positive odd integer")


@dataclass(frozen=True)
class CaseConfig:
    """Lag structure of one case study. ``output_lags`` empty means no autoregressive terms."""

    input_lags: tuple[int, int] = (1, 42)
    output_lags: tuple[int, ...] = ()
    degree: int = 1
    include_constant: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_lags", tuple(int(x) for x in self.input_lags))
        object.__setattr__(self, "output_lags", tuple(int(x) for x in self.output_lags))
        if len(self.input_lags) != 2 or len(self.output_lags) not in (0, 2):
            raise ValidationError("input_lags needs [min, max]; output_lags needs [min, max] or []")


DEFAULT_CASES = {
    "cs1": CaseConfig((1, 42), (), 1, True),
    "cs2": CaseConfig((12, 42), (12, 42), 2, True),
    "cs3": CaseConfig((12, 42), (), 2, True),
}


@dataclass(frozen=True)
class SeirConfig:
    population: float = 1_000_000.0
    beta: float = 0.3
    r: float = 0.001
    latent_days: float = 5.0
    infectious_days: float = 14.0
    initial_exposed: float = 0.0
    initial_infected: float = 100.0
    days: int = 200
    step: float = 0.1
    start_date: str = "2020-03-04"


@dataclass(frozen=True)
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitSpec = field(default_factory=lambda: SplitSpec(361, 168))
    epi: EpiConfig = field(default_factory=EpiConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    cases: Mapping[str, CaseConfig] = field(default_factory=lambda: dict(DEFAULT_CASES))
    seir: SeirConfig = field(default_factory=SeirConfig)
    output_dir: str = "out"
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def to_dict(self) -> dict:
        def clean(obj) -> dict:
            d = dataclasses.asdict(obj)
            return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}

        return {
            "data": clean(self.data),
            "split": clean(self.split),
            "epi": clean(self.epi),
            "selection": clean(self.selection),
            "cases": {k: clean(v) for k, v in self.cases.items()},
            "seir": clean(self.seir),
            "output": {"directory": self.output_dir},
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base_dir: Path = Path(".")) -> "PipelineConfig":
        _check_keys(d, {"data", "split", "epi", "selection", "cases", "seir", "output"}, "top level")
        cases = dict(DEFAULT_CASES)
        raw_cases = d.get("cases", {})
        _check_keys(raw_cases, set(CASES), "cases")
        for name, section in raw_cases.items():
            cases[name] = _build(CaseConfig, section, f"cases.{name}")
        out = d.get("output", {})
        _check_keys(out, {"directory"}, "output")
        return cls(
            data=_build(DataConfig, d.get("data", {}), "data"),
            split=_build(SplitSpec, d.get("split", {"train_len": 361, "test_len": 168}), "split"),
            epi=_build(EpiConfig, d.get("epi", {}), "epi"),
            selection=_build(SelectionConfig, d.get("selection", {}), "selection"),
            cases=cases,
            seir=_build(SeirConfig, d.get("seir", {}), "seir"),
            output_dir=str(out.get("directory", "out")),
            base_dir=base_dir,
        )

    @classmethod
    def from_toml(cls, text: str, base_dir: Path = Path(".")) -> "PipelineConfig":
        try:
            d = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"invalid TOML: {exc}") from None
        return cls.from_dict(d, base_dir)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        return cls.from_toml(path.read_text(encoding="utf-8"), path.parent)


def _check_keys(section: Mapping, allowed: set[str], where: str):
    if not isinstance(section, Mapping):
        raise ValidationError(f"[{where}] must be a table")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValidationError(f"unknown key(s) in [{where}]: {unknown}")


def _build(cls, section: Mapping, where: str):
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    _check_keys(section, names, where)
    try:
        return cls(**section)
    except TypeError as exc:
        raise ValidationError(f"[{where}]: {exc}") from None


def case_spec(name: str, case: CaseConfig) -> LagSpec:
    """Lag spec for a case study, using report-style variable names."""
    if name in ("cs1", "cs2"):
        inputs = {"u": case.input_lags}
    elif name == "cs3":
        inputs = {"u_1": case.input_lags, "u_2": case.input_lags}
    else:
        raise ValidationError(f"unknown case {name!r}; expected one of {CASES}")
    out = case.output_lags if case.output_lags else None
    return LagSpec.narx("y", inputs, out, case.degree, case.include_constant)
