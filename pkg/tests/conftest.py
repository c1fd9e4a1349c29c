from typing import Optional

import numpy as np
import pytest

from app.market import MarketModel, compute_returns, estimate_model, synth_market
from app.rng import make_rng
from app.schemas import ConstraintSet, ExperimentConfig


def make_model(omega: np.ndarray, mu: Optional[np.ndarray] = None, esg: Optional[np.ndarray] = None) -> MarketModel:
    omega = np.asarray(omega, dtype=float)
    n = len(omega)
    return MarketModel(
        asset_ids=tuple(f"A{i}" for i in range(n)),
        mu=np.linspace(0.02, 0.2, n) if mu is None else mu,
        omega=omega,
        esg=np.full(n, 50.0) if esg is None else esg,
    )


def random_spd(rng: np.random.Generator, n: int, floor: float = 0.01) -> np.ndarray:
    a = rng.normal(0.0, 0.2, size=(n, n))
    return a @ a.T + floor * np.eye(n)


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(20240611)


@pytest.fixture(scope="session")
def small_prices():
    return synth_market(10, 3, seed=5, horizon=260)


@pytest.fixture(scope="session")
def small_model(small_prices) -> MarketModel:
    return estimate_model(compute_returns(small_prices), shrinkage=0.1, annualization=252)


@pytest.fixture
def constraints() -> ConstraintSet:
    return ConstraintSet(k=3, lower=0.05, upper=0.6)


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """Fast synthetic setup for harness tests."""
    return ExperimentConfig.from_flat(
        {
            "n_assets": 12,
            "n_factors": 3,
            "horizon": 400,
            "k": 4,
            "lower": 0.05,
            "upper": 0.5,
            "n_candidates": 40,
            "seed": 3,
            "population": 6,
            "iterations": 3,
            "archive_capacity": 10,
            "repeats": 2,
            "rebalance_events": 10,
        }
    )


@pytest.fixture
def desk_config() -> ExperimentConfig:
    return ExperimentConfig.from_flat(
        {
            "n_assets": 30,
            "n_factors": 5,
            "k": 8,
            "lower": 0.02,
            "upper": 0.25,
            "n_candidates": 500,
            "seed": 11,
        }
    )
