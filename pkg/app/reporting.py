# app/reporting.py
"""
Отчёты харнесса: JSON (полный) и CSV (основная таблица) + manifest.json.

Содержимое отчётов детерминировано: порядок ключей задаётся при
сборке, время прогона попадает только в имя файла и в манифест.
"""
import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from app import __version__
from app.errors import DataError, OutputError
from app.schemas import ExperimentConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
MANIFEST_NAME = "manifest.json"
FORMATS = ("json", "csv")

Row = Dict[str, Any]


@dataclass
class Report:
    experiment: str
    config: Dict[str, Any]
    tables: Dict[str, List[Row]]
    main_table: str
    interpretations: Dict[str, str] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config": self.config,
            "interpretations": self.interpretations,
            "tables": self.tables,
        }
        doc.update(self.extras)
        return _clean(doc)


def _clean(value: Any) -> Any:
    """numpy-скаляры -> python, NaN/inf -> None (JSON без NaN)."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        return f if math.isfinite(f) else None
    return value


# ---------- сериализация ----------


def render_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def render_csv(report: Report) -> str:
    rows = report.to_dict()["tables"].get(report.main_table, [])
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    if not rows:
        return ""
    header = list(rows[0].keys())
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if row.get(col) is None else _cell(row.get(col)) for col in header])
    return output.getvalue()


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return str(value)


def timestamp_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def _unique(path: Path) -> Path:
    if not path.exists():
        return path
    i = 1
    while True:
        candidate = path.with_name(f"{path.stem}-{i}{path.suffix}")
        if not candidate.exists():
            return candidate
        i += 1


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError("cannot write output file", path=str(path), reason=str(exc))


def emit_report(
    report: Report,
    out_dir: str | Path,
    formats: Iterable[str] = FORMATS,
    timestamp: Optional[str] = None,
) -> List[Path]:
    """
    Пишет <out-dir>/<experiment>-<timestamp>.{json,csv}.
    Возвращает пути в порядке форматов.
    """
    stamp = timestamp or timestamp_now()
    out = Path(out_dir)
    written: List[Path] = []
    for fmt in formats:
        if fmt == "json":
            text = render_json(report)
        elif fmt == "csv":
            text = render_csv(report)
        else:
            raise OutputError("unknown report format", format=fmt)
        path = _unique(out / f"{report.experiment}-{stamp}.{fmt}")
        _write(path, text)
        written.append(path)
        logger.info("wrote %s report %s", fmt, path)
    return written


# ---------- манифест ----------


def _sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                h.update(chunk)
    except OSError as exc:
        raise DataError("cannot read data file", path=str(path), reason=str(exc))
    return h.hexdigest()


def data_fingerprint(config: ExperimentConfig) -> str:
    """
    sha256 содержимого CSV (цены, затем ESG); для синтетики:
    sha256 параметров генератора.
    """
    if config.prices_csv:
        parts = [_sha256_file(config.prices_csv)]
        if config.esg_csv:
            parts.append(_sha256_file(config.esg_csv))
        if len(parts) == 1:
            return f"sha256:{parts[0]}"
        return "sha256:" + hashlib.sha256("|".join(parts).encode("ascii")).hexdigest()
    params = json.dumps(config.synthetic.model_dump(), sort_keys=True)
    return "synthetic:sha256:" + hashlib.sha256(params.encode("utf-8")).hexdigest()


def write_manifest(
    out_dir: str | Path,
    config: ExperimentConfig,
    fingerprint: str,
    started_at: datetime,
    finished_at: datetime,
    outputs: Dict[str, List[str]],
) -> Path:
    """
    manifest.json: эхо конфигурации, версия, отпечаток данных,
    время и пути отчётов. Его можно передать обратно через --config.
    Пути из предыдущего манифеста в той же папке сохраняются.
    """
    path = Path(out_dir) / MANIFEST_NAME
    merged: Dict[str, List[str]] = {}
    if path.is_file():
        try:
            previous = json.loads(path.read_text(encoding="utf-8"))
            if previous.get("data_fingerprint") == fingerprint and previous.get("config") == config.to_flat():
                merged.update(previous.get("outputs") or {})
        except (OSError, ValueError):
            logger.warning("ignoring unreadable previous manifest %s", path)
    merged.update(outputs)

    doc = {
        "artifact_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "config": config.to_flat(),
        "data_fingerprint": fingerprint,
        "started_at": started_at.isoformat(),
        "finished_at": finished_at.isoformat(),
        "outputs": merged,
    }
    _write(path, json.dumps(doc, indent=2, ensure_ascii=False) + "\n")
    logger.info("wrote manifest %s", path)
    return path
