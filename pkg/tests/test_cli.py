import os
import stat

import pytest

from cdbandit.cli import main
from cdbandit.config import ConfigError, format_float, parse_config
from cdbandit.env import export_trace, from_segments

SMALL = ["--preset", "flipping", "--T", "3000", "--trials", "3"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def test_format_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, 2.5e17, -0.0):
        assert float(format_float(x)) == x
    assert format_float(float("inf")) == "inf"


def test_preset_then_file_then_flags(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[experiment]\npreset = flipping\nT = 5000\ntrials = 7\n")
    cfg = parse_config(path=ini, overrides={"trials": "9"})
    assert cfg.T == 5000 and cfg.trials == 9
    assert cfg.environment["kind"] == "flipping"


def test_resolved_config_round_trips():
    cfg = parse_config(preset="switching", overrides={"T": "1e4"}, detector_overrides={"h": "12"})
    again = parse_config(cfg.to_ini())
    assert again == cfg
    assert again.T == 10_000
    assert all(p["h"] == 12.0 for p in again.policies if "h" in p)


def test_validation_lists_every_problem():
    with pytest.raises(ConfigError) as info:
        parse_config(preset="flipping", overrides={"T": "-5", "trials": "x"}, env_overrides={"delta": "0.9"})
    assert len(info.value.problems) >= 3


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("CDBANDIT_OUTPUT", str(tmp_path / "envout"))
    assert parse_config(preset="flipping").output == str(tmp_path / "envout")


def test_dry_run_echo_is_valid_input(capsys, tmp_path):
    code, out, _ = run(["run", *SMALL, "--dry-run"], capsys)
    assert code == 0
    ini = tmp_path / "echo.ini"
    ini.write_text(out)
    code2, out2, _ = run(["run", "--config", str(ini), "--dry-run"], capsys)
    assert code2 == 0 and out2 == out


def test_run_writes_outputs(capsys, tmp_path):
    code, out, _ = run(["run", *SMALL, "--output", str(tmp_path), "--policy", "cusum-ucb", "--policy", "sw-ucb"],
                       capsys)
    assert code == 0 and "final regret ratios" in out
    trace = (tmp_path / "trace_cusum-ucb.csv").read_text().splitlines()
    assert trace[0] == "# cdbandit run"
    body = [ln for ln in trace if not ln.startswith("#")]
    assert body[0] == "t,mean_regret,se" and len(body) == 3001
    summary = kv((tmp_path / "summary.txt").read_text())
    assert "policy.cusum-ucb.fit_b" in summary and "ratio.cusum-ucb/sw-ucb" in summary


def test_run_invalid_exit_code(capsys):
    code, _, err = run(["run", "--preset", "flipping", "--T", "zero", "--alpha", "2"], capsys)
    assert code == 1
    assert "T" in err and "alpha" in err


def test_unknown_flag_is_validation_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--bogus"])
    assert info.value.code == 1
    capsys.readouterr()


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output_exit_code(capsys, tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(stat.S_IRUSR | stat.S_IXUSR)
    code, _, _ = run(["run", *SMALL, "--output", str(locked / "sub")], capsys)
    assert code == 2


def test_output_path_is_a_file_exit_code(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(["run", *SMALL, "--output", str(blocker / "sub")], capsys)
    assert code == 2 and "I/O" in err


def test_missing_trace_file_exit_code(capsys, tmp_path):
    code, _, _ = run(["trace-validate", str(tmp_path / "nope.csv"), "--T", "10"], capsys)
    assert code == 2


def test_detect_eval_small(capsys):
    argv = ["detect-eval", "--pre", "0.555", "--T", "4000", "--fa-T", "5000", "--trials", "20", "--h", "20"]
    code, out, _ = run(argv, capsys)
    res = kv(out)
    assert code == 0
    assert float(res["empirical_mean_delay"]) > 0
    assert float(res["prop1_delay_bound"]) == pytest.approx(21 / (0.8 - 0.555 - 0.1))
    assert float(res["lambda"]) == pytest.approx(0.005)


def test_detect_eval_lambda_undefined(capsys):
    # 0.5 +/- 0.1 and 0.8 +/- 0.1 sit on the 1/10 grid
    code, out, err = run(["detect-eval", "--M", "10", "--T", "2000", "--fa-T", "2000", "--trials", "5"], capsys)
    res = kv(out)
    assert code == 0
    assert res["lambda"] == "undefined" and res["theorem3_C2"] == "" and res["tuned_h"] == ""
    assert "lambda undefined" in err


def test_detect_eval_infinite_threshold(capsys):
    code, out, _ = run(["detect-eval", "--h", "inf", "--T", "2000", "--fa-T", "3000", "--trials", "5"], capsys)
    assert code == 0 and float(kv(out)["empirical_false_alarms"]) == 0.0


def test_constants(capsys):
    code, out, _ = run(["constants", "--epsilon", "0.1", "--M", "100", "--lambda", "0.05", "--u0", "0.5"], capsys)
    res = kv(out)
    assert code == 0
    assert 1e-50 < float(res["C1"]) < 1e-49
    assert abs(float(res["C2"]) - 6.51202) < 1e-5
    assert abs(float(res["r_minus"]) - 0.822) < 1e-3


def test_fit_reads_trace(capsys, tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("# c\nt,mean_regret,se\n" + "".join(f"{t},{2 * t ** 0.5 + 1},0\n" for t in range(1, 501)))
    code, out, _ = run(["fit", str(path)], capsys)
    res = kv(out)
    assert code == 0 and abs(float(res["b"]) - 0.5) < 1e-6 and res["points"] == "500"


def test_trace_validate(capsys, tmp_path):
    path = tmp_path / "tr.csv"
    export_trace(from_segments(2, 100, [(1, [0.1, 0.2]), (51, [0.3, 0.2])]), path)
    code, out, _ = run(["trace-validate", str(path), "--T", "100", "--epsilon", "0.05", "--M", "10"], capsys)
    res = kv(out)
    assert code == 0 and res["segments"] == "2" and res["breakpoints"] == "1"
    path.write_text("t,arm_1\n1,0.5\n1,0.6\n")
    code, _, err = run(["trace-validate", str(path), "--T", "100"], capsys)
    assert code == 1 and "line 3" in err
