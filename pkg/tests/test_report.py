import math

import numpy as np
import pytest

from hdfts.evaluation import EvalReport
from hdfts.report import read_report_csv, render_report, report_rows


def _cells(rows, **kw):
    return [r for r in rows if all(r[k] == v for k, v in kw.items())]


def test_single_cell_summaries_equal_value():
    rep = EvalReport()
    rep.add("RMSFE", "TWA_FFM", "ets", "none", "F", 1, 0.25)
    rows = report_rows(rep)
    assert [r["horizon"] for r in rows] == [1, "Mean", "Median"]
    assert all(r["value"] == 0.25 for r in rows)


def test_ten_horizon_summaries():
    vals = np.random.default_rng(0).uniform(size=10)
    rep = EvalReport()
    for h, v in enumerate(vals, start=1):
        rep.add("MAFE", "TWA_OWA_FFM", "arima", "none", "M", h, float(v))
    rows = report_rows(rep)
    assert _cells(rows, horizon="Mean")[0]["value"] == pytest.approx(vals.mean(), abs=1e-15)
    assert _cells(rows, horizon="Median")[0]["value"] == pytest.approx(np.median(vals), abs=1e-15)


def test_best_flag_and_na():
    rep = EvalReport()
    for h in (1, 2):
        rep.add("RMSFE", "TWA_OWA_FFM", "ets", "none", "F", h, 1.0 * h)
        rep.add("ECP", "TWA_OWA_FFM", "ets", "sequential", "F", h, 0.9)
    rep.add("RMSFE", "TWA_FFM", "ets", "none", "F", 1, 2.0)
    rows = report_rows(rep)
    best = {(r["method"], r["horizon"]) for r in _cells(rows, metric="RMSFE") if r["best"]}
    assert best == {("TWA_OWA_FFM", 1), ("TWA_OWA_FFM", "Mean"), ("TWA_OWA_FFM", "Median"), ("TWA_OWA_FFM", 2)}
    missing = _cells(rows, metric="RMSFE", method="TWA_FFM", horizon=2)[0]
    assert math.isnan(missing["value"])
    assert math.isnan(_cells(rows, metric="RMSFE", method="TWA_FFM", horizon="Mean")[0]["value"])
    assert not any(r["best"] for r in _cells(rows, metric="ECP"))

    csv_text, txt = render_report(rep)
    assert "NA" in csv_text and "NA" in txt
    assert "RMSFE [F]" in txt and "TWA_OWA_FFM/ets/sequential" in txt
    assert "1*" in txt and "* smallest value in the row" in txt


def test_csv_round_trip(tmp_path):
    rep = EvalReport()
    rng = np.random.default_rng(3)
    for m in ("TWA_OWA_FFM", "TWA_FFM"):
        for h in range(1, 4):
            rep.add("IS", m, "arima", "split-sd", "G1", h, float(rng.uniform()))
    csv1, txt1 = render_report(rep, tmp_path)
    assert (tmp_path / "report.txt").read_text() == txt1
    back = read_report_csv(tmp_path / "report.csv")
    key = lambda r: tuple(r.values())  # noqa: E731
    assert sorted(back.rows, key=key) == sorted(rep.rows, key=key)
    assert render_report(back)[0] == csv1
