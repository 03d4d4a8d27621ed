import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spikecast.features import (
    Dataset,
    LagSpec,
    apply_normalization,
    build_examples,
    denormalize,
    feature_layout,
    normalize,
    read_dataset,
    window_frame,
    write_dataset,
)
from spikecast.syngen import default_topology
from spikecast.telemetry import SeriesStore, Topology, windowize

from conftest import make_ds


def ramp_store(n, topo):
    data = {}
    for j, node in enumerate(topo.nodes):
        arr = np.zeros((n, 5))
        arr[:, 0] = np.arange(n) + 1000 * j
        arr[:, 1:4] = j
        arr[:, 4] = 0.5
        data[node] = arr
    return SeriesStore(0, data)


def test_default_dimension_is_77():
    assert len(feature_layout(default_topology(13), LagSpec())) == 77


@pytest.mark.parametrize("m", [1471, 1500, 2000])
def test_example_count(m):
    topo = Topology("t", ("u",))
    ds = build_examples(ramp_store(m, topo), topo)
    assert len(ds) == m - 1440 - 30


def test_too_short_store_names_requirement():
    topo = Topology("t", ("u",))
    with pytest.raises(ValueError, match="1470"):
        build_examples(ramp_store(1470, topo), topo)


def test_examples_cross_check_store():
    topo = Topology("t", ("u", "v"))
    store = ramp_store(1600, topo)
    ds = build_examples(store, topo)
    rt = store.column("t", "response_ms")
    for ex in ds.examples:
        k = ex.at - store.t_start
        assert ex.x[0] == rt[k]
        assert ex.y == rt[k + 30]
        assert ex.x[1] == rt[k - 5] and ex.x[11] == rt[k - 1440]
        np.testing.assert_array_equal(ex.x[12:17], store.data["u"][k])


def test_build_is_pure():
    topo = Topology("t", ("u",))
    store = ramp_store(1500, topo)
    a, b = build_examples(store, topo), build_examples(store, topo)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)


def test_normalize_examples():
    ds = normalize(make_ds(np.array([[0.0, 7.0], [5.0, 7.0], [10.0, 7.0]]), [1, 2, 3]))
    np.testing.assert_array_equal(ds.X[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(ds.X[:, 1], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(ds.y, [1, 2, 3])
    assert apply_normalization(np.array([[10.0, 7.0]]), ds.normalization)[0, 0] == 1.0


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 30), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_normalized_fit_set_in_unit_box(X):
    ds = normalize(make_ds(X, np.zeros(len(X))))
    assert ds.X.min() >= 0.0 and ds.X.max() <= 1.0
    back = denormalize(ds)
    np.testing.assert_allclose(back.X, X, atol=1e-9 * max(1.0, np.abs(X).max()))


def test_split_is_floor_of_80_percent():
    tr, te = make_ds(np.arange(100.0), np.arange(100.0)).split(0.8)
    assert len(tr) == 80 and len(te) == 20
    assert tr.at[-1] < te.at[0]


def test_dataset_csv_round_trip(tmp_path):
    ds = make_ds(np.random.default_rng(0).random((5, 3)), [1.5, 2, 3, 4, 5])
    path = tmp_path / "d.csv"
    write_dataset(ds, path, ["seed=1"])
    back = read_dataset(path)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    with pytest.raises(ValueError, match="layout"):
        read_dataset(path, layout=("x", "y", "z"))


def test_window_frame_labels_and_lags():
    topo = Topology("t", ("u",))
    store = ramp_store(1440 * 2, topo)
    ws = windowize(store, 10)
    fr = window_frame(ws, topo)
    assert fr.horizon == 3
    assert fr.X.shape == (288, 17)
    # lag of 1440 minutes is 144 windows back
    np.testing.assert_array_equal(fr.X[200, 11], ws.means["t"][56, 0])
    ds = fr.dataset(np.arange(10))
    np.testing.assert_array_equal(ds.y, ws.response_max["t"][3:13])


def test_dataset_shape_mismatch():
    with pytest.raises(ValueError):
        Dataset(np.arange(3), np.zeros((3, 2)), np.zeros(3), ("a",))
