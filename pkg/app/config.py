import os
from pathlib import Path
from typing import Any, Dict

import yaml

from app.errors import ConfigError

try:
    # python-dotenv есть в requirements.txt, подгружаем .env, если он есть
    from dotenv import load_dotenv

    load_dotenv()
except Exception:
    # Если dotenv по какой-то причине недоступен: просто игнорируем
    pass


class Settings:
    """
    Простой класс настроек без pydantic.

    Читает значения из переменных окружения / .env (если он есть).
    Это умолчания для харнесса; конфиг-файл и флаги CLI их перекрывают:
      - settings.RISK_FREE           : безрисковая ставка, годовая доля
      - settings.COST_RATE_BPS       : издержки, б.п. на единицу оборота
      - settings.SHRINKAGE           : интенсивность сжатия ковариации
      - settings.ANNUALIZATION       : торговых дней в году
      - settings.SEED / OUT_DIR / LOG_LEVEL / RUNS_DB / WORKERS
    """

    def __init__(self) -> None:
        self.RISK_FREE = float(os.getenv("CASP_RISK_FREE", "0.045"))
        self.COST_RATE_BPS = float(os.getenv("CASP_COST_RATE_BPS", "10"))
        self.SHRINKAGE = float(os.getenv("CASP_SHRINKAGE", "0.10"))
        self.ANNUALIZATION = int(os.getenv("CASP_ANNUALIZATION", "252"))
        self.SEED = int(os.getenv("CASP_SEED", "11"))

        self.OUT_DIR = os.getenv("CASP_OUT_DIR", "./runs")
        self.LOG_LEVEL = os.getenv("CASP_LOG_LEVEL", "INFO").upper()

        # Пустая строка = sqlite-файл runs.db в выходной папке
        self.RUNS_DB = os.getenv("CASP_RUNS_DB", "")

        self.WORKERS = max(int(os.getenv("CASP_WORKERS", "1")), 1)


# Глобальный объект настроек
settings = Settings()


def load_config_file(path: str | Path) -> Dict[str, Any]:
    """
    Читает плоский key-value конфиг (YAML).

    Манифест прогона тоже подходит: JSON: подмножество YAML,
    а плоское эхо конфигурации лежит у него в поле "config".
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config file not found", path=str(p))

    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("config file is not valid YAML", path=str(p), reason=str(exc))

    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config file must be a key-value mapping", path=str(p))

    # манифест -> берём эхо конфигурации
    if "artifact_version" in doc and isinstance(doc.get("config"), dict):
        doc = doc["config"]

    for key, value in doc.items():
        if isinstance(value, dict):
            raise ConfigError("config must be flat (nested mapping found)", key=key)
    return {str(k): v for k, v in doc.items()}
