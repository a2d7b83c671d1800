import csv
import dataclasses
import math

import numpy as np
import pytest

from scripts.run_experiment import EXIT_CONFIG, EXIT_OK, main
from src.cli.config import experiment_from_text, load_experiment
from src.cli import experiments
from src.cli.experiments import run_experiment
from src.cli.reports import ExperimentResult, emit, fmt, write_csv
from src.utils.config_loader import OUT_DIR_ENV
from src.utils.errors import ConfigError


@pytest.fixture(autouse=True)
def no_out_dir_env(monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)


def h(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# -------------------------------
# Config validation
# -------------------------------
def test_minimal_config_gets_defaults():
    cfg = experiment_from_text("experiment: capacity\n")
    assert cfg.seed is None
    assert cfg.tol == 1e-9
    assert cfg.separation.chunk_bits == 12
    assert cfg.build_source().alphabet1 == 2


def test_stochastic_experiment_needs_seed():
    with pytest.raises(ConfigError, match="needs a seed"):
        experiment_from_text("experiment: separation\n")
    assert experiment_from_text("experiment: separation\n", {"seed": 3}).seed == 3


@pytest.mark.parametrize("text, field", [
    ("experiment: rd\nsource:\n  dsbs: 1.5\n", "source.dsbs"),
    ("experiment: rd\nbogus: 1\n", "bogus"),
    ("experiment: telepathy\n", "experiment"),
    ("experiment: rd\nseparation:\n  chunk_bits: 20\n", "separation.chunk_bits"),
])
def test_bad_fields_are_named(text, field):
    with pytest.raises(ConfigError) as info:
        experiment_from_text(text)
    assert info.value.field == field
    assert str(info.value).startswith(f"{field}: ")


def test_one_of_sections():
    with pytest.raises(ConfigError, match="exactly one"):
        experiment_from_text("experiment: capacity\nchannel1:\n  bsc: 0.1\n  bec: 0.2\n")


def test_yaml_syntax_error_names_the_line():
    with pytest.raises(ConfigError) as info:
        experiment_from_text("experiment: rd\nsource: [dsbs\n")
    assert info.value.field.startswith("line ")


def test_build_failures_become_config_errors():
    with pytest.raises(ConfigError) as info:
        experiment_from_text("experiment: capacity\nchannel1:\n  matrix: [[0.5, 0.4]]\n")
    assert info.value.field == "channel"
    with pytest.raises(ConfigError) as info:
        experiment_from_text("experiment: rd\ndistortion1:\n  hamming: 3\n")
    assert info.value.field == "distortion"


def test_config_hash_ignores_execution_knobs():
    base = experiment_from_text("experiment: rd\nseed: 1\n")
    moved = experiment_from_text("experiment: rd\nseed: 1\n", {"out_dir": "/tmp/elsewhere", "workers": 4})
    reseeded = experiment_from_text("experiment: rd\nseed: 2\n")
    assert base.config_hash() == moved.config_hash()
    assert base.config_hash() != reseeded.config_hash()
    assert len(base.config_hash()) == 64


def test_load_experiment_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_experiment(tmp_path / "absent.yml")
    assert info.value.field == "--config"


def test_env_out_dir_loses_to_cli_override(tmp_path, monkeypatch):
    path = tmp_path / "exp.yml"
    path.write_text("experiment: capacity\n", encoding="utf-8")
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    assert load_experiment(path).output.out_dir == str(tmp_path / "env")
    assert load_experiment(path, {"out_dir": tmp_path / "cli"}).output.out_dir == str(tmp_path / "cli")


# -------------------------------
# Reports
# -------------------------------
def test_fmt():
    assert fmt(None) == ""
    assert fmt(True) == "true"
    assert fmt(np.bool_(False)) == "false"
    assert fmt(0.1) == "0.1"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(np.int64(3)) == "3"
    assert fmt((1, 0.5)) == "1 0.5"
    assert fmt(np.array([0.25, 0.75])) == "0.25 0.75"
    assert fmt("bsc(0.1)") == "bsc(0.1)"


def test_write_csv_stamps_rows(tmp_path):
    cfg = experiment_from_text("experiment: rd\nseed: 9\n")
    path = write_csv(tmp_path / "nested" / "t.csv", [{"a": 1, "b": 0.5}, {"a": 2, "c": "x"}], cfg)
    with path.open(encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["a", "b", "c", "config_hash", "seed"]
    assert rows[1] == ["1", "0.5", "", cfg.config_hash(), "9"]
    assert rows[2] == ["2", "", "x", cfg.config_hash(), "9"]


def test_write_csv_without_rows(tmp_path):
    cfg = experiment_from_text("experiment: rd\n")
    path = write_csv(tmp_path / "empty.csv", [], cfg)
    assert path.read_text(encoding="utf-8") == "config_hash,seed\n"


def test_emit_writes_every_table(tmp_path):
    cfg = experiment_from_text("experiment: capacity\noutput:\n  write_plot_data: true\n")
    result = ExperimentResult(
        "kaspi-sweep", [{"x": 1.0, "y": 2.0}], ["one line"], True,
        tables={"extra": [{"z": 3}]}, plot_columns=["x", "y"],
    )
    written = emit(result, cfg, tmp_path)
    names = sorted(p.name for p in written)
    assert names == ["kaspi_sweep.csv", "kaspi_sweep.dat", "kaspi_sweep_extra.csv", "summary.txt"]
    assert (tmp_path / "kaspi_sweep.dat").read_text(encoding="utf-8") == "# x y\n1 2\n"
    summary = (tmp_path / "summary.txt").read_text(encoding="utf-8")
    assert "status: ok" in summary and summary.rstrip().endswith("one line")


# -------------------------------
# Experiments
# -------------------------------
def test_capacity_experiment_matches_closed_forms():
    cfg = experiment_from_text(
        "experiment: capacity\ncapacity:\n  channels:\n    - bsc: 0.11\n    - bec: 0.3\n    - identity: 4\n    - z: 0.5\n"
    )
    result = run_experiment(cfg)
    assert result.ok
    assert [r["reference"] is None for r in result.rows] == [False, False, False, True]
    assert result.rows[0]["capacity"] == pytest.approx(1 - h(0.11), abs=1e-6)
    assert result.rows[2]["capacity"] == pytest.approx(2.0, abs=1e-6)


def test_rd_experiment():
    cfg = experiment_from_text("experiment: rd\nsource:\n  dsbs: 0.2\nrd:\n  D: [0.1, 0.5]\n")
    result = run_experiment(cfg)
    assert result.ok
    first, last = result.rows
    assert first["rate"] == pytest.approx(1 - h(0.1), abs=1e-6)
    assert first["conditional_rate"] == pytest.approx(h(0.2) - h(0.1), abs=1e-6)
    assert last["rate"] == pytest.approx(0.0, abs=1e-9)


def test_converse_sweep_experiment():
    cfg = experiment_from_text(
        "experiment: converse-sweep\nseed: 4\nsource:\n  dsbs: 0.2\nchannel1:\n  bsc: 0.1\nchannel2:\n  z: 0.3\n"
        "codegen:\n  count: 3\n  n: [1]\n  q: [2]\n  round_lengths: [1]\n"
        "  monte_carlo_codes: 1\n  monte_carlo_trials: 2000\n"
    )
    result = run_experiment(cfg)
    assert {r["code"] for r in result.rows} == {0, 1, 2}
    assert all(r["holds"] for r in result.rows)
    oracle = result.tables["oracle"]
    assert len(oracle) == 1 and oracle[0]["trials"] == 2000
    assert "codes with a violated check: 0" in result.summary


def test_transform_demo_matches_every_lift_exactly():
    cfg = experiment_from_text(
        "experiment: transform-demo\nseed: 5\nsource:\n  dsbs: 0.1\nchannel1:\n  bsc: 0.1\nchannel2:\n  bsc: 0.2\n"
        "codegen:\n  count: 3\n  n: [1]\n  horizon: 2\n  simultaneous: 1\n  lifts: [1, 4]\n  exact_lifts: [1, 4]\n"
    )
    result = run_experiment(cfg)
    assert result.ok
    assert len(result.rows) == 6
    assert all(r["exact_match"] is True for r in result.rows)
    assert all(r["converse_holds"] for r in result.rows if r["H"] == 1)
    assert "exact distortion comparisons: 6, matching: 6" in result.summary


@pytest.mark.slow
def test_kaspi_point_experiment_saves_witness(tmp_path):
    cfg = experiment_from_text(
        "experiment: kaspi-point\nseed: 3\nsource:\n  dsbs: 0.2\n"
        "kaspi:\n  q: 2\n  D1: 0.15\n  D2: 0.15\n  aux_sizes: [2, 2]\n  restarts: 1\n  max_sweeps: 50\n",
        {"out_dir": str(tmp_path)},
    )
    result = run_experiment(cfg)
    assert result.ok
    row = result.rows[0]
    assert row["D1"] <= 0.15 + 1e-6 and row["D2"] <= 0.15 + 1e-6
    assert row["sum_rate"] >= row["lower_bound"] - 1e-6
    assert (tmp_path / "witness.yml").exists()


def test_kaspi_sweep_at_zero_rate_targets():
    cfg = experiment_from_text(
        "experiment: kaspi-sweep\nseed: 6\nsource:\n  dsbs: 0.2\nkaspi:\n  sweep: [[0.2, 0.2], [0.25, 0.3]]\n"
    )
    result = run_experiment(cfg)
    assert result.ok
    assert [r["D1_target"] for r in result.rows] == [0.2, 0.25]
    assert all(r["sum_rate"] == pytest.approx(0.0, abs=1e-9) for r in result.rows)
    assert result.plot_columns == ["D1_target", "D2_target", "rho1", "rho2"]


SEPARATION = (
    "experiment: separation\nseed: 8\nsource:\n  dsbs: 0.2\nchannel1:\n  identity: 2\nchannel2:\n  identity: 2\n"
    "kaspi:\n  D1: 0.2\n  D2: 0.2\n"
    "separation:\n  n: 16\n  trials: 400\n  sub_block: 8\n  compare_margins: [0.0]\n  compare_n: [8]\n"
)


def test_separation_experiment_tables():
    result = run_experiment(experiment_from_text(SEPARATION))
    assert result.ok
    assert len(result.rows) == 400
    plan = result.tables["plan"][0]
    assert plan["quantizer"] == "codebook"
    assert plan["z"] == (0, 0)
    assert plan["targets_met"] is True
    assert abs(plan["D1_hat"] - 0.2) < 0.02
    assert {r["margin"] for r in result.tables["margins"]} == {0.0}
    assert {r["n"] for r in result.tables["blocklengths"]} == {8}


def test_separation_fails_when_targets_are_missed(monkeypatch):
    real_run = experiments.run

    def poor(*args, **kwargs):
        return dataclasses.replace(real_run(*args, **kwargs), D1=0.5)

    monkeypatch.setattr(experiments, "run", poor)
    result = run_experiment(experiment_from_text(SEPARATION))
    assert not result.ok
    assert result.tables["plan"][0]["targets_met"] is False


# -------------------------------
# Entry point
# -------------------------------
def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.yml"
    good.write_text("experiment: capacity\nchannel1:\n  bsc: 0.1\nchannel2:\n  bec: 0.5\n", encoding="utf-8")
    assert main(["capacity", "--config", str(good), "--out", str(tmp_path / "out")]) == EXIT_OK
    assert (tmp_path / "out" / "capacity.csv").exists()
    assert "C = " in capsys.readouterr().out

    bad = tmp_path / "bad.yml"
    bad.write_text("experiment: capacity\ntol: -1\n", encoding="utf-8")
    assert main(["capacity", "--config", str(bad), "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    assert "config error: tol" in capsys.readouterr().err


def test_main_verb_overrides_config(tmp_path):
    path = tmp_path / "exp.yml"
    path.write_text("experiment: capacity\n", encoding="utf-8")
    # the verb wins; separation is stochastic and no seed was given
    assert main(["separation", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
