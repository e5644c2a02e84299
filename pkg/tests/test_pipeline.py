import warnings
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from sigcast.pathbuild import TimeSeriesFrame
from sigcast.pipeline import (
    ConfigError,
    NowcastConfig,
    evaluate,
    fit_model,
    format_config,
    grid_search,
    parse_config,
    run_ar1_baseline,
    run_nowcast,
    split_periods,
    write_run,
)
from sigcast.simlab import make_nowcast_frame

FUEL = """
target = fuel_change   # weekly
target_lag = 8
training_proportion = 0.8
window_type = days
max_length = 17
fill_method = rectilinear
level = 4
t_level = 3
keep_sigs = all_linear
regularize = elasticnet
alpha = 0.5
l1_ratio = 0
reduce_dim = false
use_multiplier = true
use_prev_value = true
"""

GDP = """
target = gdp
target_lag = 124
validation_start = 2016-01-01
test_start = 2018-01-01
test_end = 2019-12-31
max_length = 730
level = 3
t_level = 3
keep_sigs = all_linear
regularize = elasticnet
alpha = [2.0, 0.5]
l1_ratio = 0
reduce_dim = true
factor.soft = [s1, "s 2"]
factor.global = all
"""


def synthetic(n_days=330):
    return TimeSeriesFrame(make_nowcast_frame(n_days=n_days), "target", 8)


def base_config(**kw):
    base = dict(target="target", target_lag=8, training_proportion=0.8, max_length=21,
                level=2, keep_sigs="all_linear", regularize="l2", alpha=0.01, l1_ratio=0.0,
                use_prev_value=True, use_multiplier=True)
    base.update(kw)
    return NowcastConfig(**base)


# -- config text --------------------------------------------------------------

@pytest.mark.parametrize("text", [FUEL, GDP])
def test_config_roundtrip(text):
    cfg = parse_config(text)
    again = parse_config(format_config(cfg))
    assert again == cfg
    assert format_config(again) == format_config(cfg)
    assert cfg.regularize == "elastic_net"


def test_config_values():
    fuel = parse_config(FUEL)
    assert (fuel.max_length, fuel.level, fuel.t_level, fuel.alpha) == (17, 4, 3, 0.5)
    assert fuel.recipe().use_multiplier and not fuel.is_grid
    gdp = parse_config(GDP)
    assert gdp.grid_axes == {"alpha": (2.0, 0.5)}
    assert [c.alpha for c in gdp.grid()] == [2.0, 0.5]
    assert gdp.factor_structure() == {"soft": ("s1", "s 2"), "global": "all"}
    assert gdp.params_hash() != fuel.params_hash()
    assert gdp.grid()[0].params_hash() == gdp.grid()[0].params_hash()


def test_config_errors():
    with pytest.raises(ConfigError, match="empty document.*target"):
        parse_config("# nothing here\n\n")
    with pytest.raises(ConfigError, match="colour"):
        parse_config("target = y\ntraining_proportion = 0.8\ncolour = red\n")
    with pytest.raises(ConfigError) as exc:
        parse_config("target = y\ntraining_proportion = 0.8\nlevel = two\n")
    assert exc.value.key == "level"
    with pytest.raises(ConfigError) as exc:
        parse_config("target = y\ntraining_proportion = 0.8\nlevel = [2, 3]\nt_level = 3\n")
    assert exc.value.key == "t_level"
    with pytest.raises(ConfigError):
        parse_config("target = y\nlevel = 2\n")
    with pytest.raises(ConfigError):
        parse_config("target = y\ntraining_proportion = 0.8\nlevel = 2\nlevel = 3\n")
    with pytest.raises(ConfigError):
        base_config(test_start="2016-01-01", validation_start="2017-01-01")
    with pytest.raises(ConfigError):
        base_config(window_type="days", max_length=None)


def test_split_proportions():
    frame = TimeSeriesFrame(pd.DataFrame({"x": np.arange(1000.0), "y": np.nan},
                                         index=np.arange(1000.0)), "y")
    val, test = split_periods(frame, NowcastConfig(target="y", training_proportion=0.8))
    assert (len(val), len(test)) == (160, 200)
    assert val[0] == 640.0 and test[0] == 800.0


# -- fitting ------------------------------------------------------------------

def test_constant_target_gives_constant():
    df = make_nowcast_frame(n_days=200)
    df.loc[df["target"].notna(), "target"] = 2.5
    frame = TimeSeriesFrame(df, "target", 8)
    cfg = base_config(regularize="none", alpha=0.0, use_multiplier=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run = run_nowcast(frame, cfg)
    preds = run.table["prediction"].dropna()
    assert len(preds) > 10
    np.testing.assert_allclose(preds, 2.5, atol=1e-9)


def test_linear_trend_recovered():
    df = make_nowcast_frame(n_days=300)
    refs = df.index[df["target"].notna()]
    df.loc[refs, "target"] = (refs - refs[0]).days / 100.0
    frame = TimeSeriesFrame(df, "target", 8)
    cfg = base_config(level=1, regularize="none", alpha=0.0, use_multiplier=False)
    run = run_nowcast(frame, cfg)
    ok = run.table.dropna(subset=["prediction", "realized"])
    assert len(ok) > 20
    np.testing.assert_allclose(ok["prediction"], ok["realized"], atol=1e-8)


def test_fit_model_needs_history():
    frame = synthetic()
    with pytest.raises(ValueError, match="training rows"):
        fit_model(frame, base_config(), frame.index[20])
    m = fit_model(frame, base_config(), frame.index[200])
    assert m.column_names[-1] == "prev"


# -- grid search --------------------------------------------------------------

def validation_rmse_oracle(frame, cfg):
    """Score one grid point through the public run API on the validation period."""
    val, test = split_periods(frame, cfg)
    probe = replace(cfg, training_proportion=None, validation_start=None,
                    test_start=str(val[0].date()), test_end=str(val[-1].date()))
    t = run_nowcast(frame, probe).table.dropna(subset=["prediction", "realized"])
    released = t["target_ref"].map(lambda r: frame.release_time(r) < test[0])
    e = (t["prediction"] - t["realized"])[released.astype(bool)].to_numpy()
    return float(np.sqrt(np.mean(e**2)))


def test_grid_matches_exhaustive_oracle():
    frame = synthetic()
    cfg = base_config(max_length=(21, 28), alpha=(0.01, 5.0))
    best, table = grid_search(frame, cfg)
    assert len(table) == 4
    assert list(zip(table["max_length"], table["alpha"])) == [
        (21, 0.01), (21, 5.0), (28, 0.01), (28, 5.0)]
    oracle = [validation_rmse_oracle(frame, c) for c in cfg.grid()]
    np.testing.assert_allclose(table["rmse"], oracle, rtol=1e-12)
    assert best == cfg.grid()[int(np.argmin(oracle))]
    assert table["rmse"].min() == pytest.approx(min(oracle))


def test_grid_prefers_generating_setup():
    # the target depends on the indicator, so the unshrunk model beats the near-constant one
    frame = synthetic()
    best, table = grid_search(frame, base_config(alpha=(1e3, 1e-3)))
    assert best.alpha == 1e-3
    assert table.loc[1, "rmse"] < table.loc[0, "rmse"]


def test_singleton_grid_skips_scoring():
    frame = synthetic()
    cfg = base_config()
    best, table = grid_search(frame, cfg)
    assert best == cfg and len(table) == 1


def test_failed_grid_point_recorded():
    frame = synthetic()
    best, table = grid_search(frame, base_config(max_length=(7, 21)))
    assert best.max_length == 21
    assert np.isnan(table.loc[0, "rmse"]) and table.loc[0, "error"]


def test_grid_ignores_test_targets():
    frame = synthetic()
    cfg = base_config(max_length=(21, 28), alpha=(0.01, 5.0))
    _, test = split_periods(frame, cfg)
    df = frame.data.copy()
    later = df.index >= test[0]
    df.loc[later & df["target"].notna(), "target"] += 50.0
    df.loc[later, "indicator"] *= -3.0
    b1, t1 = grid_search(frame, cfg)
    b2, t2 = grid_search(frame.with_data(df), cfg)
    assert b1 == b2
    pd.testing.assert_frame_equal(t1, t2)


# -- runs ---------------------------------------------------------------------

def test_run_is_deterministic(tmp_path):
    frame = synthetic()
    cfg = base_config(max_length=(21, 28))
    r1, r2 = run_nowcast(frame, cfg), run_nowcast(frame, cfg)
    pd.testing.assert_frame_equal(r1.table, r2.table)
    write_run(r1, tmp_path / "a")
    write_run(r2, tmp_path / "b")
    for name in ("nowcasts.csv", "evaluation.json", "grid.csv", "coefficients.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_recursive_equals_batch_on_single_time():
    frame = synthetic()
    day = "2015-10-14"
    cfgs = [base_config(training_proportion=None, test_start=day, test_end=day, recursive=r)
            for r in (True, False)]
    a, b = (run_nowcast(frame, c).table for c in cfgs)
    assert len(a) == 1
    assert a["prediction"].iloc[0] == b["prediction"].iloc[0]


def test_batch_holds_one_model():
    frame = synthetic()
    run = run_nowcast(frame, base_config(recursive=False))
    rec = run_nowcast(frame, base_config(recursive=True))
    assert run.table["prediction"].iloc[0] == rec.table["prediction"].iloc[0]
    assert not np.allclose(run.table["prediction"], rec.table["prediction"], equal_nan=True)


def test_no_lookahead():
    frame = synthetic()
    t = pd.Timestamp("2015-10-14")
    df = frame.data.copy()
    df.loc[df.index > t, "indicator"] += 100.0
    unpublished = df["target"].notna() & (df.index + pd.Timedelta(days=8) > t)
    df.loc[unpublished, "target"] = -7.0
    cfg = base_config(training_proportion=None, test_start=str(t.date()), test_end=str(t.date()))
    a = run_nowcast(frame, cfg).table
    b = run_nowcast(frame.with_data(df), cfg).table
    assert a["prediction"].iloc[0] == b["prediction"].iloc[0]
    assert a["target_ref"].iloc[0] == pd.Timestamp("2015-10-12")  # 10-05 released 10-13


def test_run_table_metadata():
    run = run_nowcast(synthetic(), base_config())
    t = run.table
    assert (t["params_hash"] == run.config.params_hash()).all()
    assert set(t["days_since_release"].dropna()) <= set(range(0, 7))
    # the target is always the earliest reference not yet released
    for _, row in t.iterrows():
        assert row["target_ref"] + pd.Timedelta(days=8) > row["time"]
        assert row["target_ref"] + pd.Timedelta(days=1) <= row["time"]


def test_ar1_baseline_exact_on_geometric_series():
    df = make_nowcast_frame(n_days=200)
    refs = df.index[df["target"].notna()]
    df.loc[refs, "target"] = 8.0 * 0.9 ** np.arange(len(refs))
    frame = TimeSeriesFrame(df, "target", 8)
    table = run_ar1_baseline(frame, frame.index[60:])
    ok = table.dropna(subset=["prediction", "realized"])
    np.testing.assert_allclose(ok["prediction"], ok["realized"], rtol=1e-9)


# -- evaluation ---------------------------------------------------------------

def fake_table(pred, real, since):
    n = len(pred)
    return pd.DataFrame({"time": np.arange(n), "target_ref": np.arange(n), "prediction": pred,
                         "realized": real, "days_since_release": since, "n_releases": 1,
                         "params_hash": "x"})


def test_evaluate_examples():
    real = np.array([1.0, 2.0, 3.0, 4.0])
    ev = evaluate(fake_table(real, real, [0, 1, 0, 1]))
    assert ev["rmse"] == 0.0 and ev["mae"] == 0.0
    ev = evaluate(fake_table(real + 0.5, real, [0, 1, 0, 1]))
    assert ev["rmse"] == pytest.approx(0.5) and ev["mae"] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        evaluate(fake_table([np.nan], [1.0], [0]))


def test_evaluate_recomputed():
    rng = np.random.default_rng(3)
    pred, real = rng.normal(size=50), rng.normal(size=50)
    since = rng.integers(0, 7, 50).astype(float)
    pred[[4, 9]] = np.nan
    ev = evaluate(fake_table(pred, real, since))
    ok = ~np.isnan(pred)
    err = pred[ok] - real[ok]
    assert ev["rmse"] == pytest.approx(np.sqrt(np.mean(err**2)), rel=1e-12)
    assert (ev["n"], ev["n_skipped"]) == (48, 2)
    for _, row in ev["profile"].iterrows():
        sel = since[ok] == row["days_since_release"]
        assert row["mae"] == pytest.approx(np.abs(err[sel]).mean(), rel=1e-12)
        assert row["n"] == sel.sum()
