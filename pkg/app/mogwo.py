# app/mogwo.py
"""
Многокритериальный «серый волк» (MOGWO) с ремонтом каждой позиции.

Критерии: дисперсия (min), доходность (max), ESG (max).
Архив Парето ограничен по размеру и поддерживает разнообразие
через адаптивную гиперсетку.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from app.errors import RepairBatchError
from app.market import MarketModel
from app.projection import Portfolio
from app.repair import repair_batch
from app.rng import make_rng
from app.schemas import ConstraintSet, MogwoConfig, RepairMethod

logger = logging.getLogger(__name__)

POSITION_MIN = -1.0
POSITION_MAX = 2.0
GRID_INFLATION = 0.1
LEADER_PRESSURE = 4.0  # β в рулетке count^(−β)
N_LEADERS = 3


# ---------- критерии ----------


@dataclass(frozen=True)
class Objectives:
    variance: float
    ret: float
    esg: float

    def oriented(self) -> Tuple[float, float, float]:
        """Все три критерия в сторону минимизации."""
        return (self.variance, -self.ret, -self.esg)

    def to_dict(self) -> Dict[str, float]:
        return {"variance": self.variance, "ret": self.ret, "esg": self.esg}


def evaluate(p: Portfolio, model: MarketModel) -> Objectives:
    w = p.dense(model.n)
    return Objectives(
        variance=float(w @ model.omega @ w),
        ret=float(model.mu @ w),
        esg=float(model.esg @ w),
    )


def dominates(a: Objectives, b: Objectives) -> bool:
    """a не хуже b по всем критериям и строго лучше хотя бы по одному."""
    no_worse = a.variance <= b.variance and a.ret >= b.ret and a.esg >= b.esg
    better = a.variance < b.variance or a.ret > b.ret or a.esg > b.esg
    return no_worse and better


# ---------- архив ----------


Member = Tuple[Portfolio, Objectives]


class ParetoArchive:
    """
    Ограниченный архив взаимно недоминируемых решений.

    Сетка пересчитывается по текущим членам при каждом обращении:
    границы: min/max по каждому критерию, расширенные на 10% диапазона.
    """

    def __init__(self, capacity: int, grid_divisions: int = 10, seed: int = 0) -> None:
        if capacity < 1 or grid_divisions < 1:
            raise ValueError("capacity and grid_divisions must be positive")
        self.capacity = capacity
        self.grid_divisions = grid_divisions
        self.members: List[Member] = []
        self._rng = make_rng(seed)

    def __len__(self) -> int:
        return len(self.members)

    def objectives(self) -> List[Objectives]:
        return [obj for _, obj in self.members]

    # ----- сетка -----

    def grid(self) -> List[Tuple[int, ...]]:
        """Индекс гиперкуба для каждого члена (в порядке members)."""
        if not self.members:
            return []
        pts = np.array([obj.oriented() for obj in self.objectives()])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = hi - lo
        lo = lo - GRID_INFLATION * span
        hi = hi + GRID_INFLATION * span
        width = hi - lo
        safe = np.where(width > 0, width, 1.0)
        cells = np.floor((pts - lo) / safe * self.grid_divisions).astype(int)
        cells = np.clip(cells, 0, self.grid_divisions - 1)
        cells[:, width <= 0] = 0
        return [tuple(int(c) for c in row) for row in cells]

    def _occupancy(self, indices: List[int]) -> Dict[Tuple[int, ...], List[int]]:
        grid = self.grid()
        by_cell: Dict[Tuple[int, ...], List[int]] = {}
        for i in indices:
            by_cell.setdefault(grid[i], []).append(i)
        return by_cell

    # ----- вставка -----

    def insert(self, portfolio: Portfolio, objectives: Objectives) -> bool:
        """
        Доминируемый кандидат (или точный дубль по критериям) отвергается;
        доминируемые им члены удаляются; при переполнении: вытеснение
        случайного члена из самой плотной ячейки.
        """
        for _, obj in self.members:
            if dominates(obj, objectives) or obj == objectives:
                return False

        self.members = [m for m in self.members if not dominates(objectives, m[1])]
        self.members.append((portfolio, objectives))

        while len(self.members) > self.capacity:
            by_cell = self._occupancy(list(range(len(self.members))))
            # самая плотная; при равенстве: лексикографически первая
            cell = max(sorted(by_cell), key=lambda c: len(by_cell[c]))
            crowd = by_cell[cell]
            victim = crowd[int(self._rng.integers(len(crowd)))]
            logger.debug("archive full; evicting member %d from cell %s (%d members)", victim, cell, len(crowd))
            del self.members[victim]
        return True

    # ----- лидеры -----

    def select_leaders(self, rng: np.random.Generator, count: int = N_LEADERS) -> List[Member]:
        """
        Рулетка по ячейкам с весом count^(−β): редкие ячейки в приоритете.
        Лидеры различны, если в архиве не меньше count членов.
        """
        if not self.members:
            raise ValueError("cannot select leaders from an empty archive")

        distinct = len(self.members) >= count
        pool = list(range(len(self.members)))
        chosen: List[int] = []
        for _ in range(count):
            by_cell = self._occupancy(pool)
            cells = sorted(by_cell)
            weights = np.array([len(by_cell[c]) ** (-LEADER_PRESSURE) for c in cells])
            cell = cells[int(rng.choice(len(cells), p=weights / weights.sum()))]
            crowd = by_cell[cell]
            pick = crowd[int(rng.integers(len(crowd)))]
            chosen.append(pick)
            if distinct:
                pool.remove(pick)
        return [self.members[i] for i in chosen]


# ---------- оптимизатор ----------


@dataclass(frozen=True)
class Wolf:
    position: np.ndarray
    portfolio: Portfolio
    objectives: Objectives


@dataclass
class RunLog:
    records: List[Dict[str, Any]] = field(default_factory=list)

    def append(self, iteration: int, archive: ParetoArchive, risk_free: float) -> None:
        objs = archive.objectives()
        sharpes = [(o.ret - risk_free) / np.sqrt(o.variance) for o in objs if o.variance > 0]
        self.records.append(
            {
                "iter": iteration,
                "archive_size": len(archive),
                "best_sharpe": float(max(sharpes)) if sharpes else None,
                "min_variance": float(min(o.variance for o in objs)),
                "max_return": float(max(o.ret for o in objs)),
            }
        )

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records)


def _repair_all(
    positions: np.ndarray,
    model: MarketModel,
    constraints: ConstraintSet,
    method: RepairMethod,
    workers: int,
    iteration: int,
) -> List[Wolf]:
    try:
        repaired = repair_batch(positions, model, constraints, method, workers=workers)
    except RepairBatchError as exc:
        idx, err = exc.failures[0]
        err.context.update(iteration=iteration, wolf=idx)
        raise err from exc
    wolves = []
    for pos, (portfolio, _) in zip(positions, repaired):
        wolves.append(Wolf(position=pos.copy(), portfolio=portfolio, objectives=evaluate(portfolio, model)))
    return wolves


def optimize(
    model: MarketModel,
    constraints: ConstraintSet,
    method: RepairMethod,
    config: MogwoConfig,
    risk_free: float = 0.0,
    workers: int = 1,
) -> Tuple[ParetoArchive, RunLog]:
    """
    Стандартные уравнения GWO с тремя лидерами из архива.

    Позиция лидера: его плотный вектор весов; a убывает линейно 2 → 0.
    После шага позиции зажимаются в [−1, 2]^N и ремонтируются.
    Вставка в архив идёт в порядке индексов волков.
    """
    rng = make_rng(config.seed)
    archive = ParetoArchive(config.archive_capacity, config.grid_divisions, seed=config.seed + 1)
    log = RunLog()
    n = model.n

    positions = rng.uniform(0.0, 1.0, size=(config.population, n))
    wolves = _repair_all(positions, model, constraints, method, workers, 0)
    for wolf in wolves:
        archive.insert(wolf.portfolio, wolf.objectives)
    log.append(0, archive, risk_free)

    total = config.iterations
    for t in range(total):
        a = 2.0 - 2.0 * t / total
        new_positions = np.empty_like(positions)
        for i in range(config.population):
            leaders = archive.select_leaders(rng)
            x = positions[i]
            moves = []
            for portfolio, _ in leaders:
                x_l = portfolio.dense(n)
                r1 = rng.random(n)
                r2 = rng.random(n)
                big_a = 2.0 * a * r1 - a
                big_c = 2.0 * r2
                moves.append(x_l - big_a * np.abs(big_c * x_l - x))
            new_positions[i] = np.clip(sum(moves) / 3.0, POSITION_MIN, POSITION_MAX)

        positions = new_positions
        wolves = _repair_all(positions, model, constraints, method, workers, t + 1)
        for wolf in wolves:
            archive.insert(wolf.portfolio, wolf.objectives)
        log.append(t + 1, archive, risk_free)
        logger.debug("mogwo iteration %d/%d: archive size %d", t + 1, total, len(archive))

    return archive, log
