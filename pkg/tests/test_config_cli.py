import csv

import pytest

from hdfts.cli import main
from hdfts.config import ConfigError, parse_config


def test_parse_config(tmp_path):
    cfg = parse_config(
        "data = rates   # relative\n"
        "method = TWA_OWA_FFM, TWA_FFM\n"
        "engine = arima\n"
        "pi_mode = split-quantile, sequential\n"
        "horizons = 1-3, 5\n"
        "split = 0.5, 0.25, 0.25\n"
        "groups = F:Female, M:Male\n"
        "monotone_from = none\n"
        "lambda = 2.5\n",
        base_dir=tmp_path,
    )
    assert cfg.data == str(tmp_path / "rates")
    assert cfg.horizons == (1, 2, 3, 5)
    assert cfg.monotone_from is None and cfg.lam == 2.5
    assert cfg.schema.groups == {"F": "Female", "M": "Male"}
    bts = cfg.backtests()
    assert len(bts) == 4 and {b.pi_mode for b in bts} == {"split-quantile", "sequential"}


@pytest.mark.parametrize("text", ["colour = red\n", "engine = lstm\n", "alpha = 1.5\n",
                                  "horizons = 0\n", "groups = Female\n", "q_max = two\n"])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_cli_end_to_end(tmp_path, capsys):
    data, run = tmp_path / "data", tmp_path / "run"
    assert main(["simulate", "--out", str(data), "--units", "3", "--years", "20",
                 "--ages", "6", "--seed", "1"]) == 0
    assert (data / "manifest.txt").exists() and (data / "run.cfg").exists()
    cfg = ["--config", str(data / "run.cfg"), "--run-dir", str(run)]

    assert main(["decompose", *cfg]) == 0
    eff = _rows(run / "effects.csv")
    assert len(eff) == 6 and "eta:M:U03" in eff[0]
    kinds = {r["kind"] for r in _rows(run / "factors.csv")}
    assert kinds == {"score", "loading", "eigenvalue"}

    assert main(["backtest", *cfg]) == 0
    fc = _rows(run / "forecasts.csv")
    assert {r["method"] for r in fc} == {"TWA_OWA_FFM", "TWA_FFM"}
    assert all(int(r["target_year"]) == int(r["train_end"]) + int(r["horizon"]) for r in fc)

    assert main(["intervals", *cfg, "--pi", "sequential"]) == 0
    iv = _rows(run / "intervals.csv")
    assert iv and all(float(r["lower"]) <= float(r["upper"]) for r in iv)

    rep = _rows(run / "report.csv")
    assert {r["pi_mode"] for r in rep} == {"none", "sequential"}
    (run / "report.txt").unlink()
    assert main(["report", *cfg]) == 0
    assert "RMSFE [F]" in (run / "report.txt").read_text()

    assert main(["reproduce", *cfg, "--engine", "arima"]) == 0
    checks = (run / "checks.txt").read_text().splitlines()
    assert checks and all(line.startswith(("ok", "WARNING")) for line in checks)
    out = capsys.readouterr().out
    assert "CPD [M]" in out


def test_cli_errors(tmp_path, capsys):
    assert main(["backtest", "--run-dir", str(tmp_path)]) == 2
    assert "no data directory" in capsys.readouterr().err
    assert main(["report", "--run-dir", str(tmp_path / "empty")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("speed = 3\n")
    assert main(["backtest", "--config", str(bad)]) == 2
