import numpy as np
import pytest

from app.errors import DataError, DataFormatError, InsufficientDataError, InvalidArgumentError
from app.market import (
    EsgInputs,
    MarketModel,
    PriceHistory,
    compute_returns,
    esg_composite,
    estimate_model,
    load_esg,
    load_prices,
    split_prices,
    split_temporal,
    synth_esg,
    synth_market,
    walk_forward_splits,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


PRICES = """date,AAA,BBB,CCC
2024-01-02,10,20,30
2024-01-03,11,20,29
2024-01-04,12,,31
2024-01-05,12.5,21,0
2024-01-08,13,22,32
"""


# ---------- загрузка ----------


def test_rows_with_gaps_or_nonpositive_prices_are_dropped(tmp_path):
    ph = load_prices(_write(tmp_path / "p.csv", PRICES))
    assert ph.asset_ids == ("AAA", "BBB", "CCC")
    assert len(ph) == 3
    assert ph.dropped_rows == 2
    assert str(ph.dates[-1]) == "2024-01-08"


def test_unsorted_dates_are_sorted(tmp_path):
    text = "date,A,B\n2024-01-03,2,2\n2024-01-02,1,1\n2024-01-04,3,3\n"
    ph = load_prices(_write(tmp_path / "p.csv", text))
    assert ph.prices[:, 0].tolist() == [1.0, 2.0, 3.0]


def test_bad_header_is_a_format_error(tmp_path):
    with pytest.raises(DataFormatError):
        load_prices(_write(tmp_path / "p.csv", "day,A\n2024-01-02,1\n2024-01-03,2\n"))
    with pytest.raises(DataFormatError):
        load_prices(_write(tmp_path / "q.csv", "date,A,A\n2024-01-02,1,1\n2024-01-03,2,2\n"))


def test_single_usable_row_is_insufficient(tmp_path):
    with pytest.raises(InsufficientDataError):
        load_prices(_write(tmp_path / "p.csv", "date,A\n2024-01-02,1\n2024-01-03,-1\n"))


def test_missing_price_file(tmp_path):
    with pytest.raises(DataError) as err:
        load_prices(tmp_path / "absent.csv")
    assert err.value.exit_code == 3


def test_esg_file_is_aligned_to_universe(tmp_path):
    text = "ticker,overall_risk,sector_proxy\nBBB,4,70\nAAA,10,50\n"
    esg = load_esg(_write(tmp_path / "esg.csv", text), ["AAA", "BBB"])
    assert esg.overall_risk.tolist() == [10, 4]
    np.testing.assert_allclose(esg_composite(esg), [30.0, 66.0])


def test_esg_missing_ticker(tmp_path):
    text = "ticker,overall_risk,sector_proxy\nAAA,1,50\n"
    with pytest.raises(DataError):
        load_esg(_write(tmp_path / "esg.csv", text), ["AAA", "ZZZ"])


def test_esg_range_is_checked():
    with pytest.raises(DataError):
        EsgInputs(overall_risk=[11], sector_proxy=[50])
    with pytest.raises(DataError):
        EsgInputs(overall_risk=[2.5], sector_proxy=[50])
    with pytest.raises(DataError):
        EsgInputs(overall_risk=[2], sector_proxy=[101])


def test_composite_extremes():
    esg = EsgInputs(overall_risk=[0, 10], sector_proxy=[100, 0])
    np.testing.assert_allclose(esg_composite(esg), [100.0, 0.0])


# ---------- оценка модели ----------


def test_returns_are_log_differences(small_prices):
    panel = compute_returns(small_prices)
    assert panel.returns.shape == (len(small_prices) - 1, small_prices.n_assets)
    np.testing.assert_allclose(panel.returns[0], np.log(small_prices.prices[1] / small_prices.prices[0]))


def test_shrinkage_preserves_trace(small_prices):
    panel = compute_returns(small_prices)
    raw = estimate_model(panel, shrinkage=0.0, annualization=252)
    shrunk = estimate_model(panel, shrinkage=0.5, annualization=252)
    assert np.trace(shrunk.omega) == pytest.approx(np.trace(raw.omega), rel=1e-12)
    np.testing.assert_allclose(shrunk.omega, shrunk.omega.T)
    assert np.linalg.eigvalsh(shrunk.omega)[0] > 0
    assert shrunk.meta["condition_number"] < raw.meta["condition_number"]


def test_condition_number_never_grows_with_shrinkage(small_prices):
    panel = compute_returns(small_prices)
    conds = [
        estimate_model(panel, shrinkage=s, annualization=252).meta["condition_number"]
        for s in np.linspace(0.0, 1.0, 21)
    ]
    for before, after in zip(conds, conds[1:]):
        assert after <= before * (1.0 + 1e-12)
    assert conds[-1] == pytest.approx(1.0)


def test_sigma_is_root_of_diagonal(small_model):
    np.testing.assert_allclose(small_model.sigma, np.sqrt(np.diag(small_model.omega)))


def test_full_shrinkage_is_scaled_identity(small_prices):
    m = estimate_model(compute_returns(small_prices), shrinkage=1.0, annualization=252)
    np.testing.assert_allclose(m.omega, m.meta["diag_scale"] * np.eye(m.n), atol=1e-15)


def test_mu_is_annualized_mean(small_prices):
    panel = compute_returns(small_prices)
    m = estimate_model(panel, shrinkage=0.1, annualization=252)
    np.testing.assert_allclose(m.mu, 252 * panel.returns.mean(axis=0))


def test_neutral_esg_without_inputs(small_model):
    assert np.all(small_model.esg == 50.0)


def test_constant_asset_is_floored():
    n = 30
    prices = np.column_stack([np.full(n, 5.0), np.exp(np.cumsum(np.linspace(-0.01, 0.01, n)))])
    dates = np.datetime64("2024-01-01") + np.arange(n)
    m = estimate_model(compute_returns(PriceHistory(("C", "V"), dates, prices)), shrinkage=0.0, annualization=1)
    assert m.omega[0, 0] == pytest.approx(1e-10)


def test_bad_shrinkage_is_rejected(small_prices):
    with pytest.raises(InvalidArgumentError):
        estimate_model(compute_returns(small_prices), shrinkage=1.5)


def test_model_dict_round_trip(small_model):
    again = MarketModel.from_dict(small_model.to_dict())
    np.testing.assert_array_equal(again.omega, small_model.omega)
    assert again.asset_ids == small_model.asset_ids


def test_malformed_model_document():
    with pytest.raises(DataFormatError):
        MarketModel.from_dict({"asset_ids": ["A"]})


# ---------- разбиения ----------


def test_temporal_split_has_no_straddling_return(small_prices):
    boundary = small_prices.dates[100]
    split = split_temporal(small_prices, boundary)
    assert split.train.dates[-1] < boundary
    assert split.test.dates[0] > boundary
    assert len(split.train) + len(split.test) == len(small_prices) - 2


def test_ten_rows_split_after_the_sixth(small_prices):
    ph = small_prices.rows(0, 10)
    split = split_temporal(ph, ph.dates[6])
    assert (len(split.train), len(split.test)) == (5, 3)
    with pytest.raises(InvalidArgumentError):
        split_temporal(ph, ph.dates[-1])


def test_segments_rejoin_to_the_original_panel(small_prices):
    for i in (2, 57, 130, len(small_prices) - 2):
        train, test = split_prices(small_prices, small_prices.dates[i])
        np.testing.assert_array_equal(np.concatenate([train.dates, test.dates]), small_prices.dates)
        np.testing.assert_array_equal(np.vstack([train.prices, test.prices]), small_prices.prices)
        split = split_temporal(small_prices, small_prices.dates[i])
        np.testing.assert_array_equal(split.train.returns, compute_returns(train).returns)


def test_boundary_outside_data_is_rejected(small_prices):
    with pytest.raises(InvalidArgumentError):
        split_temporal(small_prices, "1999-01-01")
    with pytest.raises(InvalidArgumentError):
        split_temporal(small_prices, "2099-01-01")


def test_walk_forward_windows_expand(small_prices):
    b1, b2 = small_prices.dates[80], small_prices.dates[160]
    splits = walk_forward_splits(small_prices, [str(b2), str(b1)])
    assert [s.boundary_date for s in splits] == [b1, b2]
    assert len(splits[1].train) > len(splits[0].train)
    assert splits[0].test.dates[-1] < b2
    assert splits[1].test.dates[-1] == small_prices.dates[-1]


def test_walk_forward_needs_boundaries(small_prices):
    with pytest.raises(InvalidArgumentError):
        walk_forward_splits(small_prices, [])


# ---------- синтетика ----------


def test_synthetic_market_is_deterministic():
    a = synth_market(8, 2, seed=3, horizon=50)
    b = synth_market(8, 2, seed=3, horizon=50)
    np.testing.assert_array_equal(a.prices, b.prices)
    assert not np.array_equal(a.prices, synth_market(8, 2, seed=4, horizon=50).prices)


def test_regime_drift_shifts_late_returns():
    calm = compute_returns(synth_market(10, 2, seed=3, horizon=400))
    shifted = compute_returns(synth_market(10, 2, seed=3, horizon=400, regime_start=0.5, regime_drift=0.01))
    np.testing.assert_allclose(calm.returns[:150], shifted.returns[:150])
    assert shifted.returns[250:].mean() > calm.returns[250:].mean()


def test_synthetic_esg_ranges():
    esg = synth_esg(40, seed=2)
    assert esg.overall_risk.min() >= 0 and esg.overall_risk.max() <= 10
    assert np.all((esg.sector_proxy >= 30) & (esg.sector_proxy <= 90))


def test_synthetic_market_has_correlation_structure():
    panel = compute_returns(synth_market(30, 5, seed=7, horizon=500))
    model = estimate_model(panel, shrinkage=0.1, annualization=252)
    assert model.meta["condition_number"] > 10
    assert model.to_dict()["meta"]["condition_number"] == model.meta["condition_number"]


def test_single_factor_without_noise_is_rank_one():
    ph = synth_market(8, 1, seed=2, horizon=300, idio_vol=1e-9)
    panel = compute_returns(ph)
    corr = np.corrcoef(panel.returns, rowvar=False)
    assert np.abs(corr).min() > 1.0 - 1e-8
    eig = np.linalg.eigvalsh(estimate_model(panel, shrinkage=0.0, annualization=1).omega)
    assert eig[-2] / eig[-1] < 1e-8
