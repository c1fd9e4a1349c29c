# app/market.py
"""
Рыночные данные: загрузка цен, лог-доходности, сжатая ковариация,
ESG-композит, временные разбиения и синтетический факторный рынок.
"""
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.config import settings
from app.errors import (
    DataError,
    DataFormatError,
    InsufficientDataError,
    InvalidArgumentError,
)
from app.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-10

DateLike = Union[str, date, np.datetime64]


def _frozen(arr: np.ndarray, dtype: Any = float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _as_day(value: DateLike) -> np.datetime64:
    try:
        return np.datetime64(pd.Timestamp(value).date(), "D")
    except (ValueError, TypeError) as exc:
        raise InvalidArgumentError("not a valid date", value=str(value), reason=str(exc))


# ---------- ТИПЫ ----------


@dataclass(frozen=True)
class PriceHistory:
    asset_ids: Tuple[str, ...]
    dates: np.ndarray  # datetime64[D], строго возрастают
    prices: np.ndarray  # T x N, строго положительные
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset_ids", tuple(str(a) for a in self.asset_ids))
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        object.__setattr__(self, "prices", _frozen(np.atleast_2d(self.prices)))
        if self.prices.shape != (len(self.dates), len(self.asset_ids)):
            raise DataFormatError(
                "price matrix shape does not match dates x assets",
                shape=self.prices.shape,
            )
        if not np.all(self.prices > 0):
            raise DataFormatError("prices must be strictly positive")
        if len(self.dates) > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise DataFormatError("dates must be strictly increasing")

    @property
    def n_assets(self) -> int:
        return len(self.asset_ids)

    def __len__(self) -> int:
        return len(self.dates)

    def rows(self, start: int, stop: int) -> "PriceHistory":
        return PriceHistory(self.asset_ids, self.dates[start:stop], self.prices[start:stop])


@dataclass(frozen=True)
class ReturnPanel:
    asset_ids: Tuple[str, ...]
    dates: np.ndarray  # T-1 дат (дата конца дневного интервала)
    returns: np.ndarray  # (T-1) x N, дневные лог-доходности

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        object.__setattr__(self, "returns", _frozen(np.atleast_2d(self.returns)))

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class EsgInputs:
    overall_risk: np.ndarray  # целые 0..10 (governance risk)
    sector_proxy: np.ndarray  # 0..100 (E/S прокси по сектору)

    def __post_init__(self) -> None:
        risk = np.asarray(self.overall_risk, dtype=float)
        proxy = np.asarray(self.sector_proxy, dtype=float)
        if risk.shape != proxy.shape or risk.ndim != 1:
            raise DataError("ESG input vectors must have the same length")
        if np.any(risk < 0) or np.any(risk > 10) or np.any(risk != np.round(risk)):
            raise DataError("overall_risk must be integers in [0, 10]")
        if np.any(proxy < 0) or np.any(proxy > 100):
            raise DataError("sector_proxy must lie in [0, 100]")
        object.__setattr__(self, "overall_risk", _frozen(risk.astype(int), int))
        object.__setattr__(self, "sector_proxy", _frozen(proxy))


@dataclass(frozen=True)
class MarketModel:
    asset_ids: Tuple[str, ...]
    mu: np.ndarray  # годовые ожидаемые доходности
    omega: np.ndarray  # годовая ковариация N x N
    esg: np.ndarray  # ESG-оценки 0..100
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "mu", _frozen(self.mu))
        object.__setattr__(self, "omega", _frozen(np.atleast_2d(self.omega)))
        object.__setattr__(self, "esg", _frozen(self.esg))
        n = len(self.asset_ids)
        if self.mu.shape != (n,) or self.esg.shape != (n,) or self.omega.shape != (n, n):
            raise DataFormatError("market model dimensions disagree", n=n)

    @property
    def n(self) -> int:
        return len(self.asset_ids)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.diag(self.omega))

    def with_mu(self, mu: np.ndarray) -> "MarketModel":
        return MarketModel(self.asset_ids, mu, self.omega, self.esg, dict(self.meta))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "asset_ids": list(self.asset_ids),
            "mu": [float(x) for x in self.mu],
            "omega": [[float(x) for x in row] for row in self.omega],
            "esg": [float(x) for x in self.esg],
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "MarketModel":
        try:
            return cls(
                asset_ids=tuple(doc["asset_ids"]),
                mu=np.asarray(doc["mu"], dtype=float),
                omega=np.asarray(doc["omega"], dtype=float),
                esg=np.asarray(doc["esg"], dtype=float),
                meta=dict(doc.get("meta") or {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError("malformed market model document", reason=str(exc))


@dataclass(frozen=True)
class TemporalSplit:
    train: ReturnPanel
    test: ReturnPanel
    boundary_date: np.datetime64


# ---------- ЗАГРУЗКА ----------


def load_prices(path: Union[str, Path]) -> PriceHistory:
    """
    Широкий CSV: первая колонка `date` (ISO-8601), дальше тикеры.

    Строки с пропуском, нечисловой или неположительной ценой выкидываются
    целиком; строки сортируются по дате, дубли дат: тоже в отброс.
    """
    p = Path(path)
    if not p.is_file():
        raise DataError("price file not found", path=str(p))

    try:
        raw = pd.read_csv(p, header=None, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataFormatError("price file could not be parsed", path=str(p), reason=str(exc))

    if raw.shape[0] == 0 or raw.shape[1] < 2:
        raise DataFormatError("price file needs a date column and at least one ticker", path=str(p))

    header = [str(c).strip() for c in raw.iloc[0].tolist()]
    tickers = header[1:]
    if header[0].lower() != "date":
        raise DataFormatError("first header cell must be 'date'", found=header[0])
    if any(not t for t in tickers):
        raise DataFormatError("empty ticker in header", path=str(p))
    if len(set(tickers)) != len(tickers):
        raise DataFormatError("duplicate tickers in header", path=str(p))

    body = raw.iloc[1:]
    total_rows = len(body)
    dates = pd.to_datetime(body.iloc[:, 0].str.strip(), errors="coerce", format="ISO8601")
    values = body.iloc[:, 1:].apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    matrix = values.to_numpy(dtype=float)

    usable = dates.notna().to_numpy() & np.all(np.isfinite(matrix), axis=1) & np.all(matrix > 0, axis=1)
    frame = pd.DataFrame(matrix[usable], columns=tickers)
    frame.insert(0, "date", dates[usable].dt.normalize().to_numpy())
    frame = frame.sort_values("date", kind="stable").drop_duplicates("date", keep="first")

    dropped = total_rows - len(frame)
    if dropped:
        logger.warning("dropped %d of %d price rows from %s", dropped, total_rows, p.name)
    if len(frame) < 2:
        raise InsufficientDataError("fewer than 2 usable price rows", path=str(p), usable=len(frame))

    return PriceHistory(
        asset_ids=tuple(tickers),
        dates=frame["date"].to_numpy().astype("datetime64[D]"),
        prices=frame[tickers].to_numpy(dtype=float),
        dropped_rows=dropped,
    )


def load_esg(path: Union[str, Path], asset_ids: Sequence[str]) -> EsgInputs:
    """ESG CSV: колонки ticker, overall_risk, sector_proxy."""
    p = Path(path)
    if not p.is_file():
        raise DataError("ESG file not found", path=str(p))
    try:
        df = pd.read_csv(p, dtype={"ticker": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataFormatError("ESG file could not be parsed", path=str(p), reason=str(exc))

    df.columns = [str(c).strip() for c in df.columns]
    required = {"ticker", "overall_risk", "sector_proxy"}
    if not required.issubset(df.columns):
        raise DataFormatError("ESG file needs columns ticker, overall_risk, sector_proxy", path=str(p))

    df["ticker"] = df["ticker"].str.strip()
    by_ticker = df.drop_duplicates("ticker", keep="last").set_index("ticker")
    missing = [a for a in asset_ids if a not in by_ticker.index]
    if missing:
        raise DataError("ESG file misses tickers", missing=", ".join(missing[:10]), count=len(missing))

    rows = by_ticker.loc[list(asset_ids)]
    risk = pd.to_numeric(rows["overall_risk"], errors="coerce").to_numpy(dtype=float)
    proxy = pd.to_numeric(rows["sector_proxy"], errors="coerce").to_numpy(dtype=float)
    if not (np.all(np.isfinite(risk)) and np.all(np.isfinite(proxy))):
        raise DataFormatError("non-numeric ESG values", path=str(p))
    return EsgInputs(overall_risk=risk, sector_proxy=proxy)


# ---------- СТАТИСТИКА ----------


def compute_returns(prices: PriceHistory) -> ReturnPanel:
    if len(prices) < 2:
        raise InsufficientDataError("need at least 2 price rows for returns", rows=len(prices))
    p = prices.prices
    return ReturnPanel(
        asset_ids=prices.asset_ids,
        dates=prices.dates[1:],
        returns=np.log(p[1:] / p[:-1]),
    )


def esg_composite(esg: EsgInputs) -> np.ndarray:
    """ESG = 0.4·G + 0.6·ES, G = (10 − overall_risk)·10."""
    governance = (10.0 - esg.overall_risk.astype(float)) * 10.0
    return 0.4 * governance + 0.6 * esg.sector_proxy


def estimate_model(
    returns: ReturnPanel,
    shrinkage: Optional[float] = None,
    annualization: Optional[int] = None,
    esg: Optional[EsgInputs] = None,
) -> MarketModel:
    """
    μ = ann · среднее; Ω = (1−s)·S_ann + s·(tr(S_ann)/N)·I.

    Цель сжатия: масштабированная единичная матрица: общая дисперсия
    сохраняется. Нулевая дисперсия актива поднимается до 1e-10.
    """
    s = settings.SHRINKAGE if shrinkage is None else float(shrinkage)
    ann = settings.ANNUALIZATION if annualization is None else int(annualization)
    if not 0.0 <= s <= 1.0:
        raise InvalidArgumentError("shrinkage must lie in [0, 1]", shrinkage=s)
    if ann < 1:
        raise InvalidArgumentError("annualization must be positive", annualization=ann)

    r = returns.returns
    t_obs, n = r.shape
    if t_obs < 2:
        raise InsufficientDataError("need at least 2 return observations", observations=t_obs)

    mu = ann * r.mean(axis=0)
    sample = np.atleast_2d(np.cov(r, rowvar=False, ddof=1)) * ann

    diag = np.diag(sample).copy()
    low = diag < VARIANCE_FLOOR
    if np.any(low):
        flat = [returns.asset_ids[i] for i in np.flatnonzero(low)]
        logger.warning("zero-variance assets floored at %g: %s", VARIANCE_FLOOR, ", ".join(flat))
        idx = np.flatnonzero(low)
        sample[idx, idx] = VARIANCE_FLOOR

    diag_scale = float(np.trace(sample)) / n
    omega = (1.0 - s) * sample + s * diag_scale * np.eye(n)
    omega = 0.5 * (omega + omega.T)

    if esg is None:
        logger.info("no ESG inputs; using neutral score 50 for all assets")
        scores = np.full(n, 50.0)
    else:
        if esg.overall_risk.shape != (n,):
            raise DataError("ESG inputs do not match the asset universe", n=n)
        scores = esg_composite(esg)

    eig = np.linalg.eigvalsh(omega)
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")
    meta = {
        "shrinkage": s,
        "annualization": ann,
        "condition_number": cond,
        "diag_scale": diag_scale,
        "observations": int(t_obs),
    }
    return MarketModel(returns.asset_ids, mu, omega, scores, meta)


# ---------- РАЗБИЕНИЯ ----------


def split_prices(prices: PriceHistory, boundary_date: DateLike) -> Tuple[PriceHistory, PriceHistory]:
    """Цены до границы (строго раньше) и начиная с границы."""
    b = _as_day(boundary_date)
    cut = int(np.searchsorted(prices.dates, b, side="left"))
    if cut < 2 or len(prices) - cut < 2:
        raise InvalidArgumentError(
            "boundary must leave at least 2 price rows on each side",
            boundary=str(b),
            first=str(prices.dates[0]),
            last=str(prices.dates[-1]),
        )
    return prices.rows(0, cut), prices.rows(cut, len(prices))


def split_temporal(prices: PriceHistory, boundary_date: DateLike) -> TemporalSplit:
    """Доходности считаются по сегментам отдельно: ни одна не пересекает границу."""
    train, test = split_prices(prices, boundary_date)
    return TemporalSplit(compute_returns(train), compute_returns(test), _as_day(boundary_date))


def walk_forward_splits(prices: PriceHistory, boundaries: Sequence[DateLike]) -> List[TemporalSplit]:
    """
    Расширяющееся окно: train: всё до границы,
    test: от границы до следующей границы (или до конца данных).
    """
    if not boundaries:
        raise InvalidArgumentError("at least one split boundary is required")
    days = sorted({_as_day(b) for b in boundaries})
    splits: List[TemporalSplit] = []
    for i, b in enumerate(days):
        train, rest = split_prices(prices, b)
        if i + 1 < len(days):
            stop = int(np.searchsorted(rest.dates, days[i + 1], side="left"))
            if stop < 2:
                raise InvalidArgumentError("test window between boundaries is too short", boundary=str(b))
            rest = rest.rows(0, stop)
        splits.append(TemporalSplit(compute_returns(train), compute_returns(rest), b))
    return splits


# ---------- СИНТЕТИКА ----------


def synth_market(
    n_assets: int,
    n_factors: int,
    seed: int,
    horizon: int,
    *,
    factor_vol: float = 0.01,
    idio_vol: float = 0.012,
    regime_start: Optional[float] = None,
    regime_drift: float = 0.0,
    start: str = "2020-01-02",
) -> PriceHistory:
    """
    Факторная модель r = B f + ε: первый фактор: «рынок» с положительными
    нагрузками, идиосинкратическая волатильность у активов разная.
    Результат детерминирован по seed.
    """
    if n_assets < 2 or n_factors < 1 or horizon < 2:
        raise InvalidArgumentError(
            "need n_assets >= 2, n_factors >= 1, horizon >= 2",
            n_assets=n_assets,
            n_factors=n_factors,
            horizon=horizon,
        )

    rng = make_rng(seed)
    loadings = rng.normal(0.0, 0.5, size=(n_assets, n_factors))
    loadings[:, 0] = rng.uniform(0.5, 1.5, size=n_assets)
    idio = idio_vol * rng.uniform(0.5, 2.0, size=n_assets)
    drift = rng.normal(3e-4, 4e-4, size=n_assets)

    steps = horizon - 1
    factors = rng.normal(0.0, factor_vol, size=(steps, n_factors))
    if regime_start is not None:
        t0 = int(round(regime_start * steps))
        factors[t0:] += regime_drift
    noise = rng.normal(0.0, 1.0, size=(steps, n_assets)) * idio

    returns = drift + factors @ loadings.T + noise
    log_path = np.vstack([np.zeros(n_assets), np.cumsum(returns, axis=0)])
    prices = 100.0 * np.exp(log_path)

    dates = pd.bdate_range(start=start, periods=horizon).to_numpy().astype("datetime64[D]")
    asset_ids = tuple(f"S{i:03d}" for i in range(n_assets))
    return PriceHistory(asset_ids=asset_ids, dates=dates, prices=prices)


def synth_esg(n_assets: int, seed: int) -> EsgInputs:
    rng = make_rng(derive_seed(seed, "esg"))
    return EsgInputs(
        overall_risk=rng.integers(0, 11, size=n_assets),
        sector_proxy=rng.uniform(30.0, 90.0, size=n_assets),
    )
