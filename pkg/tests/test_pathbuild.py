import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sigcast.pathbuild import (
    DegenerateFeatureWarning,
    ShortWindowWarning,
    Standardizer,
    TimeSeriesFrame,
    WindowSpec,
    apply_standardizer,
    build_path,
    fill_missing,
    fit_standardizer,
    read_wide_csv,
    window_slice,
    write_wide_csv,
)
from sigcast.sigcore import signature


def daily(n=120, start="2020-01-01"):
    idx = pd.date_range(start, periods=n, freq="D")
    return pd.DataFrame({"x": np.arange(n, dtype=float), "y": np.nan}, index=idx)


def test_window_days():
    df = daily()
    now = df.index[99]  # day 100
    w = window_slice(df, WindowSpec("days", 17), now)
    assert list(w["x"]) == list(range(83, 100))  # days 84..100, zero-based rows 83..99


def test_window_expanding_and_ind():
    df = daily(10)
    assert len(window_slice(df, WindowSpec("expanding"), df.index[-1])) == 10
    with pytest.warns(ShortWindowWarning):
        w = window_slice(df.iloc[:3], WindowSpec("ind", 5), df.index[2])
    assert len(w) == 3


def test_window_errors():
    df = daily(5)
    with pytest.raises(ValueError):
        window_slice(df, WindowSpec("days", 3), df.index[0] - pd.Timedelta(days=1))
    with pytest.raises(ValueError):
        WindowSpec("days", None)
    with pytest.raises(ValueError):
        WindowSpec("weeks", 3)


def test_fill_rules():
    s = pd.DataFrame({"a": [1.0, np.nan, np.nan, 4.0]})
    assert list(fill_missing(s)["a"]) == [1, 1, 1, 4]
    s = pd.DataFrame({"a": [np.nan, 2.0, 3.0]})
    assert list(fill_missing(s)["a"]) == [2, 2, 3]
    with pytest.raises(ValueError, match="b"):
        fill_missing(pd.DataFrame({"a": [1.0, 2.0], "b": [np.nan, np.nan]}))


def test_rectilinear_points():
    w = pd.DataFrame({"x": [1.0, 5.0]}, index=pd.Index([0.0, 2.0]))
    p = build_path(w, "rectilinear", time_augment=True)
    np.testing.assert_array_equal(p.values, [[0, 1], [2, 1], [2, 5]])
    assert p.names == ("t", "x")


def test_rectilinear_and_ffill_agree_at_observations():
    idx = pd.Index([0.0, 1.0, 2.5, 4.0])
    w = pd.DataFrame({"x": [1.0, np.nan, 3.0, -1.0], "z": [0.0, 2.0, np.nan, 1.0]}, index=idx)
    ff = build_path(w, "ffill", time_augment=True)
    rect = build_path(w, "rectilinear", time_augment=True)
    for row in ff.values:
        assert any(np.allclose(row, r) for r in rect.values)
    # both end at the same point, so level-1 terms agree
    np.testing.assert_allclose(signature(ff, 1).coeffs, signature(rect, 1).coeffs)


def test_basepoint_shifts_level_one_by_first_value():
    w = pd.DataFrame({"x": [2.0, 3.0, 1.0], "z": [-1.0, 0.0, 4.0]}, index=pd.Index([0.0, 1.0, 2.0]))
    a = signature(build_path(w, time_augment=False), 1).coeffs
    b = signature(build_path(w, time_augment=False, basepoint=True), 1).coeffs
    np.testing.assert_allclose(b - a, [2.0, -1.0])


def test_time_channel_scaling():
    df = daily(30)
    spec = WindowSpec("days", 10)
    now = df.index[-1]
    w = window_slice(df[["x"]], spec, now)
    p = build_path(w, time_origin=now - pd.Timedelta(days=10), time_unit=10.0)
    np.testing.assert_allclose(p.values[:, 0], np.arange(1, 11) / 10)


def test_single_row_duplicated():
    w = pd.DataFrame({"x": [2.0]}, index=pd.Index([0.0]))
    p = build_path(w)
    assert p.values.shape == (2, 2)
    assert np.all(signature(p, 2).coeffs == 0)


def test_standardizer_examples():
    s = Standardizer().fit([[1.0], [3.0]])
    np.testing.assert_allclose(s.mean_, [2.0])
    np.testing.assert_allclose(s.scale_, [1.0])
    np.testing.assert_allclose(s.transform([[1.0], [3.0]]), [[-1.0], [1.0]])
    with pytest.warns(DegenerateFeatureWarning):
        s = Standardizer().fit([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]])
    assert list(s.degenerate_) == [1]
    np.testing.assert_array_equal(s.transform([[1.0, 5.0]])[:, 1], [0.0])


def test_standardizer_random_matrix():
    X = np.random.default_rng(5).normal(3.0, 2.0, size=(100, 10))
    Z = apply_standardizer(fit_standardizer(X), X)
    assert np.max(np.abs(Z.mean(axis=0))) <= 1e-10
    assert np.max(np.abs(Z.var(axis=0) - 1)) <= 1e-10


@given(arrays(float, (6, 3), elements=st.floats(-1e3, 1e3)))
def test_standardizer_roundtrip(X):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = Standardizer().fit(X)
    np.testing.assert_allclose(s.inverse_transform(s.transform(X)), X, rtol=1e-9, atol=1e-9)


def test_frame_publication_lag():
    idx = pd.date_range("2021-01-04", periods=21, freq="D")
    y = np.full(21, np.nan)
    y[[0, 7, 14]] = [1.0, 2.0, 3.0]
    fr = TimeSeriesFrame(pd.DataFrame({"x": np.arange(21.0), "y": y}, index=idx), "y", 8)
    assert list(fr.published_target(idx[15])) == [1.0, 2.0]
    assert list(fr.published_target(idx[14])) == [1.0]
    with pytest.raises(ValueError):
        TimeSeriesFrame(pd.DataFrame({"y": y}, index=idx), "y")
    with pytest.raises(ValueError):
        TimeSeriesFrame(pd.DataFrame({"x": [1.0, 2.0], "y": [1.0, 2.0]}, index=[1.0, 1.0]), "y")


def test_csv_roundtrip(tmp_path):
    df = daily(5)
    df.loc[df.index[2], "y"] = 1.5
    write_wide_csv(df, tmp_path / "a.csv")
    back = read_wide_csv(tmp_path / "a.csv")
    pd.testing.assert_frame_equal(back, df, check_names=False, check_freq=False)
    (tmp_path / "b.csv").write_text("when,x\n1,2\n")
    with pytest.raises(ValueError, match="date"):
        read_wide_csv(tmp_path / "b.csv")
