# app/database.py
from contextlib import contextmanager
from pathlib import Path
from typing import Generator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine, make_url
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from app.config import settings

Base = declarative_base()

# Движок создаётся в init_db: путь к журналу зависит от --out-dir
engine: Optional[Engine] = None
SessionLocal = sessionmaker(autocommit=False, autoflush=False)


def database_url(out_dir: str | Path) -> str:
    """
    CASP_RUNS_DB, если задан; иначе sqlite-файл runs.db в выходной папке.
    """
    if settings.RUNS_DB:
        return settings.RUNS_DB
    return f"sqlite:///{Path(out_dir) / 'runs.db'}"


def init_db(url: str) -> Engine:
    """
    Создаёт движок и таблицы, если их ещё нет.
    Вызывается из main.py перед записью в журнал.
    """
    global engine

    # импортируем модели, чтобы они зарегистрировались в Base.metadata
    from app import models  # noqa: F401

    sqlite_path = make_url(url).database if url.startswith("sqlite") else None
    if sqlite_path and sqlite_path != ":memory:":
        Path(sqlite_path).parent.mkdir(parents=True, exist_ok=True)

    if engine is None or str(engine.url) != url:
        if engine is not None:
            engine.dispose()
        connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
        engine = create_engine(url, connect_args=connect_args)
        SessionLocal.configure(bind=engine)

    Base.metadata.create_all(bind=engine)
    return engine


@contextmanager
def db_session() -> Generator[Session, None, None]:
    """
    Сессия с commit при успехе и rollback при исключении.
    """
    if engine is None:
        raise RuntimeError("init_db() must be called before opening a session")
    db: Session = SessionLocal()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()
