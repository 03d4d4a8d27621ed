import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikecast.evaluate import (
    TREATMENTS,
    BacktestPair,
    BacktestReport,
    ConfusionMatrix,
    ModelFactory,
    confusion,
    default_thresholds,
    expected_pairs,
    read_report_csv,
    stage1,
    stage2_backtest,
    threshold_sweep,
    write_report_csv,
    write_sweep_csv,
)
from spikecast.features import LagSpec
from spikecast.resample import SmoteConfig
from spikecast.telemetry import Topology, WindowSeries

from conftest import make_ds


def test_table_row_percentages():
    cm = ConfusionMatrix(493, 868, 38, 1687)
    assert cm.recall == pytest.approx(0.928, abs=1e-3)
    assert cm.precision == pytest.approx(0.362, abs=1e-3)
    assert cm.percent_row() == (93, 36)


def test_undefined_metrics_are_none():
    cm = confusion([1.0, 2.0], [1.0, 2.0])
    assert cm.recall is None and cm.precision is None
    assert confusion([500, 1], [500, 1]) == ConfusionMatrix(1, 0, 0, 1)


def test_treatments_expressible():
    assert len(TREATMENTS) == 8
    for learner, sm, tune in TREATMENTS:
        assert learner in ("cart", "forest", "logistic")


def spiky_ds(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 3))
    y = 200 + 500 * (X[:, 0] > 0.8) + rng.normal(0, 10, n)
    return make_ds(X, y)


def test_stage1_split_sizes():
    res = stage1(spiky_ds(100), "cart", {"max_depth": 3})
    assert (res.n_train, res.n_test) == (80, 20)
    assert sum((res.confusion.tp, res.confusion.fp, res.confusion.fn, res.confusion.tn)) == 20


def test_stage1_smote_leaves_test_rows_alone():
    ds = spiky_ds()
    a = stage1(ds, "cart", {"max_depth": 3})
    b = stage1(ds, "cart", {"max_depth": 3}, SmoteConfig())
    assert a.confusion.tp + a.confusion.fn == b.confusion.tp + b.confusion.fn
    _, test = ds.split(0.8)
    np.testing.assert_array_equal(test.X, spiky_ds().split(0.8)[1].X)


def test_stage1_all_treatments_run():
    ds = spiky_ds(300)
    from spikecast.tuner import DEConfig

    for learner, sm, tune in TREATMENTS:
        res = stage1(ds, learner, {}, SmoteConfig() if sm else None, DEConfig(np=4, gen=1) if tune else None)
        assert res.row()["learner"] == learner


def constant_ws(n_windows, value=250.0, topo=Topology("t", ("u",))):
    means = {n: np.tile([value, 1.0, 1.0, 1.0, 0.9], (n_windows, 1)) for n in topo.nodes}
    peaks = {n: np.full(n_windows, value) for n in topo.nodes}
    return WindowSeries(0, 10, means, peaks), topo


def test_pair_count_formula():
    assert expected_pairs(31 * 144) == 4317
    assert expected_pairs(148) == 1
    assert expected_pairs(147) == 0


def test_minimal_and_constant_backtest():
    ws, topo = constant_ws(148)
    rep = stage2_backtest(ws, topo, LagSpec())
    assert len(rep.pairs) == 1
    assert rep.pairs[0].predicted_ms == rep.pairs[0].actual_ms == 250.0
    assert rep.horizon_offsets == (145, 146, 147)


def test_backtest_too_short_and_short_L():
    ws, topo = constant_ws(147)
    with pytest.raises(ValueError, match="too few"):
        stage2_backtest(ws, topo)
    ws, topo = constant_ws(20)
    with pytest.raises(ValueError):
        stage2_backtest(ws, topo, L_hours=0.25)
    rep = stage2_backtest(ws, topo, L_hours=0.5)
    assert rep.train_span == 3 and len(rep.pairs) == 20 - 6


def test_parallel_matches_serial():
    rng = np.random.default_rng(0)
    ws, topo = constant_ws(170)
    ws.means["t"][:, 0] = rng.uniform(100, 700, 170)
    ws.response_max["t"][:] = ws.means["t"][:, 0] * 1.1
    f = ModelFactory.of("cart", {"max_depth": 3}, SmoteConfig())
    a = stage2_backtest(ws, topo, factory=f, seed=2)
    b = stage2_backtest(ws, topo, factory=f, seed=2, n_jobs=2)
    assert a.pairs == b.pairs


def report_of(pred, act):
    pairs = [BacktestPair(i, p, a, "") for i, (p, a) in enumerate(zip(pred, act))]
    return BacktestReport(pairs, 24, 10, (145, 146, 147), 144)


def test_sweep_limits():
    rep = report_of([400.0, 450.0, 480.0], [500.0, 300.0, 600.0])
    low = threshold_sweep(rep, [300.0])
    assert low.points[0].recall == 1.0
    high = threshold_sweep(rep, [490.0])
    assert high.points[0].alarms == 0 and high.points[0].precision is None
    assert len(default_thresholds()) == 25


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1000), st.floats(0, 1000)), min_size=1, max_size=80))
def test_recall_non_increasing(pairs):
    pred, act = map(np.array, zip(*pairs))
    curve = threshold_sweep((pred, act))
    rec = [p.recall for p in curve.points]
    if not (act > 470).any():
        assert all(r is None for r in rec)
        return
    assert all(b <= a for a, b in zip(rec, rec[1:]))
    # brute-force recount at both ends
    pos = act > 470
    assert rec[0] == np.sum((pred > 370) & pos) / pos.sum()
    assert rec[-1] == np.sum((pred > 490) & pos) / pos.sum()


def test_report_and_sweep_csv(tmp_path):
    rep = report_of([400.0, 450.0, 480.0], [500.0, 300.0, 600.0])
    path = tmp_path / "r.csv"
    write_report_csv(rep, path, ["seed=1"])
    i, p, a = read_report_csv(path)
    np.testing.assert_array_equal(p, rep.predicted)
    write_sweep_csv(threshold_sweep((p, a), [370.0, 490.0]), tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "threshold_ms,recall,precision,alarms"
    assert lines[2] == "490,0.0,,0"
    (tmp_path / "e.csv").write_text("i,predicted_ms,actual_ms\n")
    with pytest.raises(ValueError, match="no pairs"):
        read_report_csv(tmp_path / "e.csv")
