import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narxfrols.cli import main
from narxfrols.config import PipelineConfig, case_spec
from narxfrols.data import ingest_csv, read_table
from narxfrols.errors import ValidationError
from narxfrols.frols import IdentifiedModel
from narxfrols.pipeline import run_case_study, run_synthetic_suite


def _config_file(tmp_path, data_path, extra=""):
    text = PipelineConfig().to_toml().replace('path = "data/uk_covid.csv"', f'path = "{data_path.name}"')
    p = tmp_path / "config.toml"
    p.write_text(text + extra)
    return p


def test_default_config_round_trip():
    cfg = PipelineConfig()
    assert PipelineConfig.from_toml(cfg.to_toml()) == cfg
    assert PipelineConfig.from_toml(cfg.to_toml()).digest() == cfg.digest()


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 40), st.sampled_from(["aic", "bic", "gcv", "apress", "fixed"]),
    st.integers(1, 20), st.integers(12, 30), st.booleans(), st.integers(100, 400),
)
def test_config_round_trip_property(max_terms, crit, lo, hi, const, train):
    cfg = PipelineConfig.from_dict({
        "selection": {"max_terms": max_terms, "size_criterion": crit, "n_folds": 5},
        "cases": {"cs2": {"input_lags": [lo, hi], "output_lags": [lo, hi], "degree": 2, "include_constant": const}},
        "split": {"train_len": train, "test_len": 10},
    })
    assert PipelineConfig.from_toml(cfg.to_toml()) == cfg


@pytest.mark.parametrize("text", [
    "[data]\npaht = 'x.csv'\n",
    "[selection]\nmax_term = 3\n",
    "[cases.cs4]\ndegree = 1\n",
    "[bogus]\n",
    "[selection]\nmax_terms = 0\n",
    "not toml = = 1",
])
def test_bad_config_rejected(text):
    with pytest.raises(ValidationError):
        PipelineConfig.from_toml(text)


def test_case_specs():
    cfg = PipelineConfig()
    s1 = case_spec("cs1", cfg.cases["cs1"])
    assert s1.degree == 1 and s1.max_lag == 42 and s1.input_names == ["u"]
    s2 = case_spec("cs2", cfg.cases["cs2"])
    assert [v.name for v in s2.variables] == ["y", "u"] and s2.degree == 2
    s3 = case_spec("cs3", cfg.cases["cs3"])
    assert [v.name for v in s3.variables] == ["u_1", "u_2"]


def test_missing_data_file_names_path(tmp_path, capsys):
    cfg = _config_file(tmp_path, tmp_path / "absent.csv")
    assert main(["identify", "--config", str(cfg), "--case", "cs1", "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "ingest" in err and "absent.csv" in err


def test_missing_config_file(tmp_path):
    assert main(["derive-rn", "--config", str(tmp_path / "none.toml")]) == 2


def test_invalid_config_exit_code(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("[selection]\nmax_terms = 0\n")
    assert main(["simulate-seir", "--config", str(p)]) == 1


def test_identify_cs1_writes_artifacts(tmp_path, epidemic_csv):
    cfg = _config_file(tmp_path, epidemic_csv)
    out = tmp_path / "out"
    assert main(["identify", "--config", str(cfg), "--case", "cs1", "--out", str(out)]) == 0
    d = out / "cs1"
    for name in ["model_report.txt", "model_report.csv", "model.json", "predictions.csv",
                 "summary.txt", "trace.csv", "folds.csv", "residuals.txt", "rn.csv"]:
        assert (d / name).is_file(), name
    header = (d / "model_report.txt").read_text().splitlines()[:3]
    assert header[0].startswith("# narxfrols") and "config sha256" in header[1] and "data sha256" in header[2]
    report = read_table(d / "model_report.csv")
    model = IdentifiedModel.load(d / "model.json")
    assert [r["Model Term"] for r in report] == [str(t) for t in model.terms]
    assert len(read_table(d / "trace.csv")) == len(model)
    assert len(read_table(d / "folds.csv")) == 10
    rn = ingest_csv(d / "rn.csv", {"date": "date", "rn": "output"})
    assert len(rn) == 560
    preds = read_table(d / "predictions.csv")
    assert {r["split"] for r in preds} == {"train", "test"}
    assert "r2_test" in (d / "summary.txt").read_text()


def test_case_study_deterministic(tmp_path, epidemic_csv):
    cfg = PipelineConfig.load(_config_file(tmp_path, epidemic_csv))
    cfg = PipelineConfig.from_dict(
        {**cfg.to_dict(), "cases": {"cs3": {"input_lags": [12, 18], "degree": 2}}}, cfg.base_dir
    )
    a = run_case_study(cfg, "cs3", tmp_path / "a")["out"]
    b = run_case_study(cfg, "cs3", tmp_path / "b")["out"]
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name
    report = read_table(a / "model_report.csv")
    assert all(r["Model Term"].startswith(("u_1", "u_2", "constant")) for r in report)


def test_simulate_and_derive(tmp_path, epidemic_csv):
    cfg = _config_file(tmp_path, epidemic_csv)
    assert main(["simulate-seir", "--config", str(cfg), "--out", str(tmp_path / "s.csv")]) == 0
    rows = read_table(tmp_path / "s.csv")
    assert len(rows) == 201 and list(rows[0]) == ["date", "S", "E", "I", "R", "D"]
    total = [sum(float(r[k]) for k in "SEIRD") for r in rows]
    assert np.allclose(total, 1e6, rtol=1e-9)
    assert main(["derive-rn", "--config", str(cfg), "--out", str(tmp_path / "rn.csv")]) == 0
    assert list(read_table(tmp_path / "rn.csv")[0]) == ["date", "beta", "r", "rn"]


def test_verify_seed_zero_all_pass(tmp_path):
    assert all(c.passed for c in run_synthetic_suite(0))
    assert main(["verify", "--seed", "0", "--out", str(tmp_path / "v.txt")]) == 0
    assert (tmp_path / "v.txt").read_text().rstrip().endswith("all checks passed")


def test_init_config_parses(tmp_path):
    assert main(["init-config", "--out", str(tmp_path / "c.toml")]) == 0
    assert PipelineConfig.load(tmp_path / "c.toml") == PipelineConfig()


def test_console_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "narxfrols", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify" in r.stdout


def test_fill_flag_overrides_config(tmp_path, epidemic_csv):
    lines = epidemic_csv.read_text().splitlines()
    epidemic_csv.write_text("\n".join(lines[:50] + lines[51:]) + "\n")
    cfg = _config_file(tmp_path, epidemic_csv)
    assert main(["derive-rn", "--config", str(cfg), "--out", str(tmp_path / "a.csv")]) == 2
    assert main(["derive-rn", "--config", str(cfg), "--fill", "forward", "--out", str(tmp_path / "b.csv")]) == 0
    assert len(read_table(tmp_path / "b.csv")) == 560
