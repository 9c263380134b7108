import csv
import io
import json

import pytest

from vimlab import cli
from vimlab.data import read_csv


def body(text):
    rows = list(csv.reader(line for line in io.StringIO(text) if not line.startswith("#")))
    return rows[0], rows[1:]


def run_cli(argv, tmp_path, name="out.csv"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def header(text):
    return dict(line[2:].split(" = ", 1) for line in text.splitlines() if line.startswith("# "))


# -- config resolution ------------------------------------------------------------------

def test_empty_config_gives_defaults(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("")
    cfg = cli.parse_args(["importance", "--config", str(f)])
    assert cfg.scenario == "independent" and cfg.model == "gbt" and cfg.seed == 1 and cfg.workers == 1
    assert cfg.ntrain == (1000,) and cfg.predictor == ("X1", "X5", "X6")
    assert cfg.splits == 10 and cfg.permutations == 5 and cfg.kind == "MVIM"
    assert cfg.npop == 100_000 and cfg.reps == 50 and cfg.scale == "desk"


def test_flag_overrides_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nseed = 11\nscenario = weak\n")
    cfg = cli.parse_args(["truth", "--config", str(f), "--seed", "12"])
    assert cfg.seed == 12 and cfg.scenario == "weak"


def test_grid_parsed_ascending():
    cfg = cli.parse_args(["bias-variance", "--ntrain", "1000,100,500"])
    assert cfg.ntrain == (100, 500, 1000)


def test_paper_scale_preset():
    cfg = cli.parse_args(["bias-variance", "--scale", "paper"])
    assert cfg.ntrain[-1] == 50_000 and cfg.npop == 1_000_000 and cfg.reps == 100


def test_unknown_key_lists_valid_keys():
    with pytest.raises(cli.UsageError, match="valid keys: .*seed"):
        cli.parse_config_text("sede = 3\n")


def test_type_mismatch_names_key():
    with pytest.raises(cli.UsageError, match="'npop'"):
        cli.parse_config_text("npop = lots\n")


def test_desk_scale_caps_ntrain():
    with pytest.raises(cli.UsageError):
        cli.parse_args(["importance", "--ntrain", "20000"])
    assert cli.parse_args(["importance", "--ntrain", "20000", "--scale", "paper"]).ntrain == (20000,)


def test_model_overrides_need_matching_family():
    with pytest.raises(cli.UsageError):
        cli.parse_args(["importance", "--model", "oracle", "--n-trees", "10"])


# -- exit codes and error records ---------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["truth", "--scenario", "nope"],
    ["truth", "--bogus", "1"],
    ["truth", "--seed", "x"],
    ["frobnicate"],
    ["importance", "--model", "forest"],
    ["reproduce-table"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["exit_code"] == 2 and record["message"]


def test_unwritable_output_exit_3(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = cli.main(["truth", "--predictor", "X6", "--npop", "10000", "--out", str(blocker / "sub" / "o.csv")])
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"] == "OutputError"


def test_missing_config_exit_3(tmp_path):
    assert cli.main(["truth", "--config", str(tmp_path / "nope.cfg")]) == 3


def test_runtime_error_exit_1(tmp_path, capsys):
    # AMVIM is undefined for a categorical predictor
    code = cli.main(["importance", "--model", "oracle", "--kind", "amvim", "--predictor", "C2",
                     "--ntrain", "300", "--splits", "1", "--out", str(tmp_path / "o.csv")])
    assert code == 2
    code = cli.main(["truth", "--predictor", "X6", "--npop", "10", "--out", str(tmp_path / "o.csv")])
    assert code == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "ValueError"


# -- subcommands ----------------------------------------------------------------------------

def test_truth_example(tmp_path):
    code, out = run_cli(["truth", "--scenario", "independent", "--npop", "100000", "--seed", "7",
                         "--predictor", "X1,X6"], tmp_path)
    assert code == 0
    cols, rows = body(out.read_text())
    assert cols == ["scenario", "predictor", "method", "e_orig", "e_switch", "mi_true", "ci_true", "mc_se", "n_pop"]
    x1 = dict(zip(cols, rows[0]))
    assert abs(float(x1["mi_true"]) - 8.0) <= 3 * float(x1["mc_se"])
    assert float(dict(zip(cols, rows[1]))["mi_true"]) == 0.0
    meta = json.loads((tmp_path / "out.csv.meta.json").read_text())
    assert meta["config"]["seed"] == 7 and "numpy" in meta["versions"]


def test_header_carries_resolved_config(tmp_path):
    _, out = run_cli(["truth", "--npop", "10000", "--predictor", "X6", "--seed", "3"], tmp_path)
    h = header(out.read_text())
    assert h["command"] == "truth" and h["seed"] == "3" and h["npop"] == "10000" and h["predictor"] == "X6"
    assert "workers" not in h and "out" not in h


def test_simulate_round_trip(tmp_path):
    code, out = run_cli(["simulate", "--ntrain", "50", "--scenario", "simple"], tmp_path)
    assert code == 0
    data = read_csv(out)
    assert data.n_rows == 50 and data.outcome_name == "Y"


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "results"))
    assert cli.main(["truth", "--predictor", "X6", "--npop", "10000"]) == 0
    assert (tmp_path / "results" / "truth.csv").exists()
    assert not [p for p in (tmp_path / "results").iterdir() if p.name.endswith(".tmp")]


def test_stdout_output(capsys):
    assert cli.main(["truth", "--predictor", "X6", "--npop", "10000", "--out", "-"]) == 0
    assert capsys.readouterr().out.startswith("# command = truth")


def test_importance_columns(tmp_path):
    code, out = run_cli(["importance", "--model", "oracle", "--ntrain", "300", "--splits", "2",
                         "--predictor", "X1,X6"], tmp_path)
    assert code == 0
    cols, rows = body(out.read_text())
    assert cols == ["scenario", "predictor", "kind", "model_family", "n_train", "point", "spread", "e_orig_hat",
                    "e_switch_or_cond_hat", "B", "k", "m", "seed"]
    assert [r[1] for r in rows] == ["X1", "X6"] and rows[0][2] == "MVIM" and rows[0][3] == "oracle"


def test_importance_on_csv_data(tmp_path):
    run_cli(["simulate", "--ntrain", "300", "--scenario", "weak"], tmp_path, "sim.csv")
    code, out = run_cli(["importance", "--data", str(tmp_path / "sim.csv"), "--model", "spline",
                         "--basis-per-var", "1", "--kind", "loco", "--predictor", "X5", "--splits", "2"], tmp_path)
    assert code == 0
    assert body(out.read_text())[1][0][:3] == ["data", "X5", "LOCO"]


def test_cate_check_all_pass(tmp_path):
    code, out = run_cli(["cate-check", "--n-mc", "20000"], tmp_path)
    assert code == 0
    cols, rows = body(out.read_text())
    assert cols == ["model_id", "identity", "switch_based", "cate_based", "mc_se", "pass"]
    assert len({r[0] for r in rows}) >= 6
    assert all(r[-1] == "pass" for r in rows)


@pytest.mark.parametrize("table,cols", [
    (2, ["predictor", "n_train", "bias2_switch", "bias2_orig", "var_switch", "var_orig", "delta", "mi_hat",
         "mi_c", "mi_true"]),
    (5, ["n_train", "bias2_cond", "bias2_orig", "var_cond", "var_orig", "delta", "ci_hat", "ci_c", "ci_true"]),
])
def test_reproduce_table_shapes(tmp_path, table, cols):
    code, out = run_cli(["reproduce-table", "--table", str(table), "--model", "spline", "--basis-per-var", "1",
                         "--ntrain", "100,200", "--reps", "2", "--n-eval", "1000", "--npop", "10000"], tmp_path)
    assert code == 0
    got_cols, rows = body(out.read_text())
    assert got_cols == cols
    assert len(rows) == 2 * (3 if table == 2 else 1)


def test_reproduce_table_1(tmp_path):
    code, out = run_cli(["reproduce-table", "--table", "1", "--npop", "10000"], tmp_path)
    cols, rows = body(out.read_text())
    assert cols == ["predictor", "mvim"] and [r[0] for r in rows] == list(cli.TABLE1_PREDICTORS)


# -- determinism ------------------------------------------------------------------------------

BV = ["bias-variance", "--model", "spline", "--basis-per-var", "1", "--ntrain", "100,200", "--reps", "3",
      "--n-eval", "1000", "--predictor", "X1,X6"]


def test_byte_identical_across_runs_and_workers(tmp_path):
    _, a = run_cli(BV, tmp_path, "a.csv")
    _, b = run_cli(BV, tmp_path, "b.csv")
    _, c = run_cli([*BV, "--workers", "2"], tmp_path, "c.csv")
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_archive_header_reruns_byte_identical(tmp_path):
    _, a = run_cli(BV, tmp_path, "a.csv")
    _, b = run_cli(["bias-variance", "--config", str(a)], tmp_path, "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_archive_for_other_command_rejected(tmp_path):
    _, a = run_cli(["truth", "--predictor", "X6", "--npop", "10000"], tmp_path)
    with pytest.raises(cli.UsageError):
        cli.parse_args(["importance", "--config", str(a)])
