"""End-to-end acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import functools
import sys
import time
import warnings
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE, make_ds  # noqa: E402
from oracles import brute_force_split_sse, central_difference, grid_argmax, knn_by_loops, on_some_segment  # noqa: E402

from spikecast import learners  # noqa: E402
from spikecast.evaluate import ConfusionMatrix, ModelFactory, stage1, stage2_backtest, threshold_sweep  # noqa: E402
from spikecast.features import LagSpec, normalize, window_frame  # noqa: E402
from spikecast.learners.cart import best_split  # noqa: E402
from spikecast.learners.logistic import loss_and_grad  # noqa: E402
from spikecast.resample import SmoteConfig, smote  # noqa: E402
from spikecast.syngen import GenConfig, generate  # noqa: E402
from spikecast.telemetry import ApdexBuckets, apdex_score, windowize  # noqa: E402
from spikecast.tuner import Candidate, DEConfig, ParamDim, ParamSpace, mutate_crossover, optimize, tune_learner  # noqa: E402


def record(n, ok, detail, started):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - started:.1f}s)"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def test_criterion_01_table_arithmetic():
    t0 = time.perf_counter()
    cases = [((493, 868, 38, 1687), (93, 36)), ((489, 764, 42, 1791), (92, 39)), ((417, 437, 114, 2118), (79, 49))]
    got = [ConfusionMatrix(*c).percent_row() for c, _ in cases]
    record(1, got == [w for _, w in cases], f"recall/precision % {got}", t0)


@functools.lru_cache(maxsize=None)
def month_backtest():
    syn = generate(GenConfig(days=31, seed=1))
    ws = windowize(syn.store, 10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ws.n_windows, stage2_backtest(ws, syn.topology, LagSpec(), ModelFactory(), L_hours=24, seed=1)


def test_criterion_02_pair_count():
    t0 = time.perf_counter()
    n_windows, rep = month_backtest()
    ok = n_windows == 4464 and len(rep.pairs) == 4317 and rep.horizon_offsets == (145, 146, 147)
    record(2, ok, f"{n_windows} windows -> {len(rep.pairs)} pairs with per-pair CART refits", t0)


def test_criterion_03_apdex():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for s, t, f in rng.integers(0, 100_000, (20_000, 3)):
        if s + t + f:
            worst = max(worst, abs(apdex_score(ApdexBuckets(int(s), int(t), int(f))) - (s + 0.5 * t) / (s + t + f)))
    points = [apdex_score(ApdexBuckets(*b)) for b in ((10, 0, 0), (6, 2, 2), (0, 0, 5))]
    ok = worst <= 1e-12 and np.allclose(points, [1.0, 0.7, 0.0], atol=1e-12, rtol=0)
    record(3, ok, f"max |err| {worst:.1e} over 20000 buckets; points {points}", t0)


def test_criterion_04_de():
    t0 = time.perf_counter()
    y = mutate_crossover(Candidate(np.array([0.0])), Candidate(np.array([1.0])), Candidate(np.array([2.0])),
                         Candidate(np.array([0.0])), DEConfig(f=0.75), np.random.default_rng(0), forced=0)
    space = ParamSpace((ParamDim("x", 0.0, 10.0),))

    def vee(p):
        return (-abs(p["x"] - 3.0), 0.0)

    best = grid_argmax(lambda x: vee({"x": x})[0], 0.0, 10.0)
    hits, counts_ok, mono = 0, True, True
    for seed in range(100):
        res = optimize(space, vee, DEConfig(np=20, gen=10, seed=seed))
        hits += abs(res.params["x"] - best) <= 0.25
        counts_ok &= res.evaluations == 20 * 11
        mono &= all(b >= a for a, b in zip(res.trace, res.trace[1:]))
    ok = y.values[0] == 2.5 and counts_ok and mono and hits >= 95
    record(4, ok, f"mutant {y.values[0]}; evals 220 each: {counts_ok}; monotone: {mono}; "
                  f"within 0.25 of grid optimum {best:.3f}: {hits}/100", t0)


def test_criterion_05_smote_geometry():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    bad = 0
    n_syn = 0
    for trial in range(1000):
        m, n_maj, d = int(rng.integers(2, 15)), int(rng.integers(0, 30)), int(rng.integers(1, 5))
        k = int(rng.integers(1, 7))
        y = np.r_[rng.uniform(471, 1000, m), rng.uniform(0, 470, n_maj)]
        ds = normalize(make_ds(rng.random((m + n_maj, d)), rng.permutation(y)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = smote(ds, SmoteConfig(k=k, percent=int(rng.choice([50, 100, 200])), seed=trial))
        n = len(ds)
        if not (np.array_equal(out.X[:n], ds.X) and np.array_equal(out.y[:n], ds.y)):
            bad += 1
            continue
        mino = np.flatnonzero(ds.y > 470)
        nbrs = knn_by_loops(ds.X[mino], min(k, m - 1))
        for x, lab in zip(out.X[n:], out.y[n:]):
            n_syn += 1
            if not (lab > 470 and on_some_segment(x, lab, ds.X[mino], ds.y[mino], nbrs)):
                bad += 1
    record(5, bad == 0, f"1000 datasets, {n_syn} synthetic rows, {bad} violations", t0)


def test_criterion_06_cart_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(2, 201)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, d)) if rng.random() < 0.5 else rng.integers(0, 6, (n, d)).astype(float)
        y = rng.lognormal(5.5, 0.5, n)
        want = brute_force_split_sse(X, y)
        found = best_split(X, y)
        if found is None:
            worst = max(worst, 0.0 if want == np.inf else np.inf)
            continue
        f, thr, _ = found
        left = X[:, f] <= thr
        got = left.sum() * np.var(y[left]) + (~left).sum() * np.var(y[~left])
        worst = max(worst, abs(got - want) / max(1.0, want))
    record(6, worst <= 1e-9, f"100 datasets, worst relative SSE gap {worst:.1e}", t0)


def test_criterion_07_logistic_gradient():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        n, d = int(rng.integers(5, 60)), int(rng.integers(1, 8))
        X, t = rng.normal(size=(n, d)), (rng.random(n) < 0.5).astype(float)
        v, l2 = rng.normal(size=d + 1), float(rng.uniform(0, 0.1))
        _, gw, gb = loss_and_grad(v[:d], v[d], X, t, l2)
        num = central_difference(lambda u: loss_and_grad(u[:d], u[d], X, t, l2)[0], v)
        worst = max(worst, np.linalg.norm(np.r_[gw, gb] - num) / max(np.linalg.norm(num), 1e-12))
    record(7, worst < 1e-4, f"50 instances, worst relative error {worst:.1e}", t0)


EVAL_SEED = 7


def tuned_backtest(seed=EVAL_SEED):
    # hyperparameters come from a separately seeded selection series, never the evaluated one
    sel = generate(GenConfig(days=31, seed=seed + 1000, buildup_fraction=1.0))
    fr = window_frame(windowize(sel.store), sel.topology, LagSpec())
    train = fr.dataset(np.arange(fr.X.shape[0] - fr.horizon))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = tune_learner(train, None, "cart", DEConfig(seed=seed), 470, SmoteConfig(seed=seed))
        ev = generate(GenConfig(days=14, seed=seed, buildup_fraction=1.0))
        rep = stage2_backtest(windowize(ev.store), ev.topology, LagSpec(),
                              ModelFactory.of("cart", res.params, SmoteConfig()), seed=seed)
    return res.params, rep


@functools.lru_cache(maxsize=None)
def tuned_cached():
    return tuned_backtest()


def test_criterion_08_end_to_end():
    t0 = time.perf_counter()
    params, rep = tuned_cached()
    curve = threshold_sweep(rep)
    good = curve.best(0.70)
    top = max(curve.points, key=lambda p: min(p.recall or 0, p.precision or 0))
    detail = (f"tuned {params}; {len(rep.pairs)} pairs; {len(good)} thresholds with recall and precision >= 0.70; "
              f"best {top.alarm_threshold_ms:g} ms: recall {top.recall:.2f} precision {top.precision:.2f}")
    record(8, bool(good), detail, t0)


def test_criterion_09_sweep_monotone():
    t0 = time.perf_counter()
    reports = [month_backtest()[1], tuned_cached()[1]]
    rng = np.random.default_rng(9)
    for _ in range(50):
        act = rng.uniform(200, 700, 100)
        reports.append((act + rng.normal(0, 80, 100), act))
    ok, absent_ok = True, True
    for r in reports:
        curve = threshold_sweep(r)
        rec = [p.recall for p in curve.points]
        ok &= all(b <= a for a, b in zip(rec, rec[1:]))
        absent_ok &= all((p.precision is None) == (p.alarms == 0) for p in curve.points)
    empty = threshold_sweep((np.array([100.0]), np.array([100.0])))
    absent_ok &= all(p.recall is None for p in empty.points)
    record(9, ok and absent_ok, f"{len(reports)} reports monotone: {ok}; undefined reported as absent: {absent_ok}", t0)


def test_criterion_10_leakage():
    t0 = time.perf_counter()
    syn = generate(GenConfig(days=5, seed=21, buildup_fraction=1.0))
    ws = windowize(syn.store)
    fr = window_frame(ws, syn.topology, LagSpec())
    ds = fr.dataset(np.arange(fr.X.shape[0] - fr.horizon))
    cut = int(np.floor(0.8 * len(ds)))
    poisoned = ds.subset(slice(0, None))
    poisoned.X[cut:] *= 1e6
    poisoned.y[cut:] *= 1e6
    cfg, sm = DEConfig(np=8, gen=3, seed=2), SmoteConfig(seed=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = stage1(ds, "cart", {}, sm, cfg)
        b = stage1(poisoned, "cart", {}, sm, cfg)
    same1 = learners.digest(a.model) == learners.digest(b.model) and a.tuning.params == b.tuning.params

    factory = ModelFactory.of("cart", {"max_depth": 6}, SmoteConfig())
    span = 144
    same2 = True
    for i in (0, 100, 300):
        clean = stage2_backtest(ws, syn.topology, LagSpec(), factory, pairs=[i], seed=3)
        dirty = stage2_backtest(ws.scaled(1e6, i + span + 1), syn.topology, LagSpec(), factory, pairs=[i], seed=3)
        same2 &= clean.pairs[0].model_ref == dirty.pairs[0].model_ref
        same2 &= clean.pairs[0].actual_ms != dirty.pairs[0].actual_ms
    record(10, same1 and same2, f"stage1 model identical: {same1}; stage2 models identical on 3 pairs: {same2}", t0)


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
    sys.exit(0 if all("PASS" in v for v in ACCEPTANCE.values()) else 1)
