import numpy as np
import pytest

from fundsep.defaults import default_model
from fundsep.errors import ConfigError, DegenerateObservation, NonFinite, ParseError, ValidationError
from fundsep.kalman import (PriceSeries, filter_log_returns, ingest_prices, mean_square_error, riccati_residual,
                            run_filter, simulate_joint, steady_state_variance, write_prices)
from fundsep.model import FILTERED_OU, PreferenceMarketSpec
from fundsep.sde import SimConfig


@pytest.fixture(scope="module")
def ou():
    return default_model(FILTERED_OU)


def test_steady_variance(spec, ou):
    P = steady_state_variance(spec, ou)
    assert P == pytest.approx(0.098773003935204065, rel=1e-14)
    assert abs(riccati_residual(spec, ou, P)) < 1e-15


def test_unobservable_factor(ou):
    flat = PreferenceMarketSpec(p=-1.0, r=0.0, mu=[0.0], Sigma=[[0.2]], rho=[0.3])
    assert steady_state_variance(flat, ou) == pytest.approx(0.25 * (1 - 0.09) / 2.0)
    locked = PreferenceMarketSpec(p=-1.0, r=0.0, mu=[0.0], Sigma=[[0.2]], rho=[1.0])
    with pytest.raises(DegenerateObservation):
        steady_state_variance(locked, ou)


def test_wrong_model(spec):
    with pytest.raises(ConfigError):
        steady_state_variance(spec, default_model("3/2"))


def test_filter_error_matches_steady_variance(spec, ou):
    P = steady_state_variance(spec, ou)
    sim = simulate_joint(spec, ou, SimConfig(dt=0.01, horizon=60.0, n_paths=16, seed=4))
    dlog = np.diff(sim.log_prices, axis=1)
    y, _ = filter_log_returns(spec, ou, P, dlog, 0.01)
    mse = mean_square_error(sim.true_path, y, start=int(5 / ou.a / 0.01))
    assert 0.85 < mse / P < 1.15


def test_run_filter_single_series(spec, ou):
    P = steady_state_variance(spec, ou)
    sim = simulate_joint(spec, ou, SimConfig(dt=0.02, horizon=4.0, n_paths=2, seed=1))
    res = run_filter(spec, ou, P, sim.price_series(1))
    y, _ = filter_log_returns(spec, ou, P, np.diff(sim.log_prices[1], axis=0), 0.02)
    np.testing.assert_allclose(res.y_hat, y, rtol=1e-12)
    assert res.innovations.shape == (200, 2)


def test_divergence_is_reported(spec, ou):
    dlog = np.full((3, 2), 1e308)
    with pytest.raises(NonFinite):
        filter_log_returns(spec, ou, 0.1, dlog, 1e3)


def test_asset_count_mismatch(spec, ou):
    series = PriceSeries([0.0, 1.0], [[1.0, 1.1]])
    with pytest.raises(ValidationError):
        run_filter(spec, ou, 0.1, series)


def test_price_round_trip(tmp_path):
    s = PriceSeries([0.0, 0.5, 1.0], [[1.0, 1.01, 0.99], [2.0, 2.2, 2.1]])
    path = tmp_path / "p.csv"
    write_prices(path, s)
    back = ingest_prices(path)
    np.testing.assert_array_equal(back.times, s.times)
    np.testing.assert_array_equal(back.prices, s.prices)


@pytest.mark.parametrize("text,err,needle", [
    ("t,asset_1\n0,1\n1,2\n", ParseError, "row 1"),
    ("time,asset_1\n0,1\n1,abc\n", ParseError, "row 3, column 2"),
    ("time,asset_1\n0,1\n1\n", ParseError, "row 3"),
    ("time,asset_1\n0,1\n1,-2\n", ValidationError, "row 3, column 2"),
    ("time,asset_1\n0,1\n0,2\n", ValidationError, "row 3"),
    ("time,asset_1\n0,1\n", ValidationError, "two observations"),
    ("", ParseError, "empty"),
])
def test_ingest_errors(tmp_path, text, err, needle):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(err, match=needle):
        ingest_prices(path)


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        ingest_prices(tmp_path / "nope.csv")
