import json
import logging
from datetime import datetime
from typing import Any, Dict, List, Optional

from sqlalchemy import Column, DateTime, Integer, String, Text, select
from sqlalchemy.orm import Mapped

from .database import Base, db_session

logger = logging.getLogger(__name__)


class RunStatus:
    OK = "ok"
    FAILED = "failed"


class ExperimentRun(Base):
    """Журнал прогонов харнесса: одна строка на эксперимент."""

    __tablename__ = "experiment_runs"

    id: Mapped[int] = Column(Integer, primary_key=True, index=True)
    experiment: Mapped[str] = Column(String, nullable=False, index=True)
    started_at: Mapped[datetime] = Column(DateTime, nullable=False)
    finished_at: Mapped[Optional[datetime]] = Column(DateTime, nullable=True)
    seed: Mapped[int] = Column(Integer, nullable=False)
    data_fingerprint: Mapped[str] = Column(String, nullable=False)
    report_paths: Mapped[str] = Column(Text, nullable=False, default="[]")
    status: Mapped[str] = Column(String, nullable=False, default=RunStatus.OK)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "experiment": self.experiment,
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
            "seed": self.seed,
            "data_fingerprint": self.data_fingerprint,
            "report_paths": json.loads(self.report_paths or "[]"),
            "status": self.status,
        }


def record_run(
    experiment: str,
    seed: int,
    data_fingerprint: str,
    report_paths: List[str],
    started_at: datetime,
    finished_at: Optional[datetime] = None,
    status: str = RunStatus.OK,
) -> int:
    with db_session() as db:
        row = ExperimentRun(
            experiment=experiment,
            started_at=started_at,
            finished_at=finished_at,
            seed=int(seed) & 0x7FFFFFFFFFFFFFFF,
            data_fingerprint=data_fingerprint,
            report_paths=json.dumps(report_paths),
            status=status,
        )
        db.add(row)
        db.flush()
        run_id = int(row.id)
    logger.info("recorded %s run #%d in the ledger", experiment, run_id)
    return run_id


def list_runs(limit: int = 20, experiment: Optional[str] = None) -> List[Dict[str, Any]]:
    """Последние прогоны, свежие первыми."""
    with db_session() as db:
        stmt = select(ExperimentRun)
        if experiment:
            stmt = stmt.where(ExperimentRun.experiment == experiment)
        stmt = stmt.order_by(ExperimentRun.id.desc()).limit(limit)
        return [row.to_dict() for row in db.scalars(stmt)]
