from datetime import date
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.config import settings
from app.errors import ConfigError


# ---- Ограничения ----

class ConstraintSet(BaseModel):
    """K активов, веса активных в [lower, upper]."""

    model_config = ConfigDict(frozen=True)

    k: int = Field(15, ge=1)
    lower: float = Field(0.02, ge=0.0, le=1.0)
    upper: float = Field(0.15, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_simplex(self) -> "ConstraintSet":
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")
        # иначе симплекс на активном множестве пуст
        if self.k * self.lower > 1.0 + 1e-12 or self.k * self.upper < 1.0 - 1e-12:
            raise ValueError("k*lower <= 1 <= k*upper is violated")
        return self


# ---- Правила ремонта ----

class SelectionKind(str, Enum):
    ABS = "abs"
    VOL_NORM = "vol_norm"
    MIN_VAR = "min_var"
    SHARPE = "sharpe"
    RETURN_BOOSTED = "return_boosted"


class ProjectionKind(str, Enum):
    EUCLIDEAN = "euclidean"
    OMEGA_METRIC = "omega_metric"
    RETURN_REGULARIZED = "return_regularized"


class SelectionRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: SelectionKind
    lam: float = Field(0.0, ge=0.0)  # λ, только для return_boosted
    risk_free: float = 0.0  # r_f, только для sharpe


class ProjectionRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ProjectionKind
    gamma: float = Field(0.0, ge=0.0)  # γ, только для return_regularized


class RepairMethod(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    selection: SelectionRule
    projection: ProjectionRule


METHOD_NAMES = (
    "euclidean",
    "volnorm-euc",
    "minvar-euc",
    "sharpe-euc",
    "casp-basic",
    "casp-retsel",
    "ra-casp",
)

BASELINE_METHOD = "euclidean"

# name -> (selection kind, projection kind)
_PRESETS = {
    "euclidean": (SelectionKind.ABS, ProjectionKind.EUCLIDEAN),
    "volnorm-euc": (SelectionKind.VOL_NORM, ProjectionKind.EUCLIDEAN),
    "minvar-euc": (SelectionKind.MIN_VAR, ProjectionKind.EUCLIDEAN),
    "sharpe-euc": (SelectionKind.SHARPE, ProjectionKind.EUCLIDEAN),
    "casp-basic": (SelectionKind.VOL_NORM, ProjectionKind.OMEGA_METRIC),
    "casp-retsel": (SelectionKind.RETURN_BOOSTED, ProjectionKind.OMEGA_METRIC),
    "ra-casp": (SelectionKind.RETURN_BOOSTED, ProjectionKind.RETURN_REGULARIZED),
}


def method_preset(
    name: str,
    lam: float = 1.2,
    gamma: float = 0.35,
    risk_free: Optional[float] = None,
) -> RepairMethod:
    """
    Один из семи именованных методов.

    λ используется только return_boosted-отбором, γ: только
    return_regularized-проекцией; у casp-retsel γ всегда 0.
    """
    if name not in _PRESETS:
        raise ConfigError("unknown repair method", method=name, known=", ".join(METHOD_NAMES))

    sel_kind, proj_kind = _PRESETS[name]
    rf = settings.RISK_FREE if risk_free is None else risk_free
    selection = SelectionRule(
        kind=sel_kind,
        lam=lam if sel_kind == SelectionKind.RETURN_BOOSTED else 0.0,
        risk_free=rf if sel_kind == SelectionKind.SHARPE else 0.0,
    )
    projection = ProjectionRule(
        kind=proj_kind,
        gamma=gamma if proj_kind == ProjectionKind.RETURN_REGULARIZED else 0.0,
    )
    return RepairMethod(name=name, selection=selection, projection=projection)


# ---- MOGWO ----

class MogwoConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    population: int = Field(50, ge=1)
    iterations: int = Field(100, ge=0)
    archive_capacity: int = Field(30, ge=1)
    seed: int = 0
    grid_divisions: int = Field(10, ge=1)


# ---- Эксперименты ----

class SyntheticSource(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = 7
    n_assets: int = Field(50, ge=2)
    n_factors: int = Field(5, ge=1)
    horizon: int = Field(1237, ge=3)
    regime_start: Optional[float] = Field(None, gt=0.0, lt=1.0)
    regime_drift: float = 0.0


# плоский ключ -> (группа, поле группы)
_FLAT_GROUPS = {
    "k": ("constraints", "k"),
    "lower": ("constraints", "lower"),
    "upper": ("constraints", "upper"),
    "synthetic_seed": ("synthetic", "seed"),
    "n_assets": ("synthetic", "n_assets"),
    "n_factors": ("synthetic", "n_factors"),
    "horizon": ("synthetic", "horizon"),
    "regime_start": ("synthetic", "regime_start"),
    "regime_drift": ("synthetic", "regime_drift"),
    "population": ("mogwo", "population"),
    "iterations": ("mogwo", "iterations"),
    "archive_capacity": ("mogwo", "archive_capacity"),
    "grid_divisions": ("mogwo", "grid_divisions"),
}


class ExperimentConfig(BaseModel):
    """
    Полная конфигурация харнесса.

    Источник данных: prices_csv (+ необязательный esg_csv) либо,
    если prices_csv не задан, синтетический рынок synthetic.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    prices_csv: Optional[str] = None
    esg_csv: Optional[str] = None
    synthetic: SyntheticSource = Field(default_factory=SyntheticSource)

    constraints: ConstraintSet = Field(default_factory=ConstraintSet)
    methods: List[str] = Field(default_factory=lambda: list(METHOD_NAMES))
    n_candidates: int = Field(500, ge=1)
    oos_candidates: Optional[int] = Field(None, ge=1)
    seed: int = Field(default_factory=lambda: settings.SEED)
    split_boundaries: List[date] = Field(default_factory=list)

    risk_free: float = Field(default_factory=lambda: settings.RISK_FREE)
    cost_rate_bps: float = Field(default_factory=lambda: settings.COST_RATE_BPS, ge=0.0)
    shrinkage: float = Field(default_factory=lambda: settings.SHRINKAGE, ge=0.0, le=1.0)
    annualization: int = Field(default_factory=lambda: settings.ANNUALIZATION, ge=1)

    mogwo: MogwoConfig = Field(default_factory=MogwoConfig)
    repeats: int = Field(15, ge=1)
    ra_lambda: float = Field(1.2, ge=0.0)
    ra_gamma: float = Field(0.35, ge=0.0)

    rebalance_events: int = Field(50, ge=1)
    rebalance_noise: float = Field(0.15, ge=0.0)
    rebalances_per_year: float = Field(12.0, gt=0.0)
    candidate_scaling: Literal["budget", "raw"] = "budget"
    workers: int = Field(default_factory=lambda: settings.WORKERS, ge=1)

    @field_validator("methods", mode="before")
    @classmethod
    def _split_methods(cls, v: Any) -> Any:
        if isinstance(v, str):
            return [m.strip() for m in v.split(",") if m.strip()]
        return v

    @field_validator("split_boundaries", mode="before")
    @classmethod
    def _split_dates(cls, v: Any) -> Any:
        if v is None:
            return []
        if isinstance(v, str):
            return [d.strip() for d in v.split(",") if d.strip()]
        return v

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("methods must be nonempty")
        unknown = [m for m in v if m not in METHOD_NAMES]
        if unknown:
            raise ValueError(f"unknown methods: {', '.join(unknown)}")
        # порядок сохраняем, дубли выкидываем
        return list(dict.fromkeys(v))

    @field_validator("split_boundaries")
    @classmethod
    def _sorted_dates(cls, v: List[date]) -> List[date]:
        return sorted(set(v))

    # ---------- плоский формат ----------

    @classmethod
    def from_flat(cls, flat: Dict[str, Any]) -> "ExperimentConfig":
        """
        Собирает конфиг из плоского словаря (конфиг-файл / эхо манифеста).
        Ошибки валидации превращаются в ConfigError (exit code 2).
        """
        data: Dict[str, Any] = {}
        groups: Dict[str, Dict[str, Any]] = {}
        for key, value in flat.items():
            if key in _FLAT_GROUPS:
                group, field = _FLAT_GROUPS[key]
                if value is not None:
                    groups.setdefault(group, {})[field] = value
                elif field == "regime_start":
                    groups.setdefault(group, {})[field] = None
            else:
                data[key] = value
        data.update(groups)
        try:
            return cls(**data)
        except ValidationError as exc:
            raise ConfigError("invalid experiment configuration", errors=_short_errors(exc))

    def to_flat(self) -> Dict[str, Any]:
        """Плоское эхо, обратное from_flat; порядок ключей фиксирован."""
        out: Dict[str, Any] = {
            "prices_csv": self.prices_csv,
            "esg_csv": self.esg_csv,
            "synthetic_seed": self.synthetic.seed,
            "n_assets": self.synthetic.n_assets,
            "n_factors": self.synthetic.n_factors,
            "horizon": self.synthetic.horizon,
            "regime_start": self.synthetic.regime_start,
            "regime_drift": self.synthetic.regime_drift,
            "k": self.constraints.k,
            "lower": self.constraints.lower,
            "upper": self.constraints.upper,
            "methods": list(self.methods),
            "n_candidates": self.n_candidates,
            "oos_candidates": self.oos_candidates,
            "seed": self.seed,
            "split_boundaries": [d.isoformat() for d in self.split_boundaries],
            "risk_free": self.risk_free,
            "cost_rate_bps": self.cost_rate_bps,
            "shrinkage": self.shrinkage,
            "annualization": self.annualization,
            "population": self.mogwo.population,
            "iterations": self.mogwo.iterations,
            "archive_capacity": self.mogwo.archive_capacity,
            "grid_divisions": self.mogwo.grid_divisions,
            "repeats": self.repeats,
            "ra_lambda": self.ra_lambda,
            "ra_gamma": self.ra_gamma,
            "rebalance_events": self.rebalance_events,
            "rebalance_noise": self.rebalance_noise,
            "rebalances_per_year": self.rebalances_per_year,
            "candidate_scaling": self.candidate_scaling,
            "workers": self.workers,
        }
        return out

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Копия с перекрытыми плоскими ключами (флаги CLI)."""
        flat = self.to_flat()
        flat.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_flat(flat)

    def method(self, name: str) -> RepairMethod:
        return method_preset(name, lam=self.ra_lambda, gamma=self.ra_gamma, risk_free=self.risk_free)


def _short_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err.get("loc", ()))
        parts.append(f"{loc}: {err.get('msg')}")
    return "; ".join(parts)
