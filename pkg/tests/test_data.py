import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tacqr.data import (
    DataError,
    Dataset,
    derive_seed,
    load_csv,
    make_rng,
    split_dataset,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_csv_basic(tmp_path):
    p = _write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    d = load_csv(p, "y")
    assert (d.n, d.p) == (3, 2)
    np.testing.assert_array_equal(d.x[:, 0], [1, 4, 7])
    np.testing.assert_array_equal(d.y, [3, 6, 9])


def test_load_csv_response_in_middle_keeps_column_order(tmp_path):
    d = load_csv(_write(tmp_path, "a,y,b\n1,2,3\n"), "y")
    np.testing.assert_array_equal(d.x, [[1, 3]])


def test_load_csv_nan_cell_is_located(tmp_path):
    p = _write(tmp_path, "a,y\n1,2\nnan,3\n")
    with pytest.raises(DataError, match=r"row 3, column 'a'"):
        load_csv(p, "y")


def test_load_csv_non_numeric(tmp_path):
    with pytest.raises(DataError, match=r"non-numeric.*row 2, column 'y'"):
        load_csv(_write(tmp_path, "a,y\n1,abc\n"), "y")


def test_load_csv_only_response_column(tmp_path):
    with pytest.raises(DataError, match="no covariate"):
        load_csv(_write(tmp_path, "y\n1\n2\n"), "y")


def test_load_csv_missing_column(tmp_path):
    with pytest.raises(DataError, match="missing response column"):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), "y")


def test_load_csv_empty_file(tmp_path):
    with pytest.raises(DataError, match="empty"):
        load_csv(_write(tmp_path, ""), "y")


def test_load_csv_ragged_row(tmp_path):
    with pytest.raises(DataError, match="row 4 has 1 cells"):
        load_csv(_write(tmp_path, "a,y\n1,2\n\n3\n"), "y")


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.ones((3, 1)), np.ones(2))
    with pytest.raises(DataError):
        Dataset(np.ones((2, 1)), np.array([1.0, np.inf]))
    with pytest.raises(DataError):
        Dataset(np.ones((2, 0)), np.ones(2))
    d = Dataset(np.arange(3.0), np.arange(3.0))
    assert d.x.shape == (3, 1)
    with pytest.raises(ValueError):
        d.y[0] = 5.0


def test_split_sizes_small():
    d = Dataset(np.arange(8.0), np.arange(8.0))
    assert split_dataset(d, (0.5, 0.25, 0.25), seed=123).sizes == (4, 2, 2)


def test_split_sizes_standard_protocol():
    d = Dataset(np.arange(1000.0), np.zeros(1000))
    assert split_dataset(d, (0.5, 0.25, 0.25), seed=7).sizes == (500, 250, 250)


def test_split_remainder_goes_to_test():
    d = Dataset(np.arange(11.0), np.zeros(11))
    assert split_dataset(d, (0.5, 0.25, 0.25), seed=0).sizes == (5, 2, 4)


def test_split_deterministic():
    d = Dataset(np.arange(50.0), np.zeros(50))
    a, b = split_dataset(d, seed=99), split_dataset(d, seed=99)
    for u, v in zip((a.train, a.calib, a.test), (b.train, b.calib, b.test)):
        np.testing.assert_array_equal(u, v)
    c = split_dataset(d, seed=100)
    assert not np.array_equal(a.train, c.train)


def test_split_errors():
    d = Dataset(np.arange(3.0), np.zeros(3))
    with pytest.raises(DataError):
        split_dataset(d, (0.5, 0.25, 0.25))
    d = Dataset(np.arange(10.0), np.zeros(10))
    with pytest.raises(DataError):
        split_dataset(d, (0.5, 0.3, 0.3))
    with pytest.raises(DataError):
        split_dataset(d, (1.0, 0.0, 0.0))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(4, 400), seed=st.integers(0, 2 ** 64 - 1),
       f=st.tuples(st.floats(0.2, 0.6), st.floats(0.1, 0.3)))
def test_split_partition_property(n, seed, f):
    fr = (f[0], f[1], 1.0 - f[0] - f[1])
    d = Dataset(np.arange(float(n)), np.zeros(n))
    try:
        s = split_dataset(d, fr, seed)
    except DataError:
        return
    allidx = np.concatenate([s.train, s.calib, s.test])
    assert allidx.size == np.unique(allidx).size == n
    assert allidx.max() < n and allidx.min() >= 0
    assert s.calib.size >= 1
    assert s.sizes[0] == int(np.floor(n * fr[0] + 1e-9))
    assert s.sizes[1] == int(np.floor(n * fr[1] + 1e-9))


def test_rng_reproducible_and_seeds_mixed():
    a = make_rng(5).random(4)
    b = make_rng(5).random(4)
    np.testing.assert_array_equal(a, b)
    seeds = {derive_seed(0, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert all(0 <= s < 2 ** 64 for s in seeds)
    assert derive_seed(3, 4) == derive_seed(3, 4)
