# app/main.py
"""
CLI харнесса: ablation, oos, turnover, optimize, ingest, history.

Коды выхода: 0 = успех, 2 = ошибка конфигурации/аргументов,
3 = ошибка данных, 4 = численный сбой.
"""
import functools
import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
import yaml
from sqlalchemy.exc import SQLAlchemyError

from app import __version__
from app.config import load_config_file, settings
from app.database import database_url, init_db
from app.errors import CaspError, ConfigError, DataError, OutputError
from app.experiments import EXPERIMENTS
from app.experiments.common import fit_model
from app.market import load_esg, load_prices
from app.models import RunStatus, list_runs, record_run
from app.reporting import FORMATS, data_fingerprint, emit_report, timestamp_now, write_manifest
from app.schemas import ExperimentConfig

logger = logging.getLogger("app")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class Options:
    config_path: Optional[str]
    seed: Optional[int]
    out_dir: str
    formats: Tuple[str, ...]


def _setup_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr, force=True)


def _handles_errors(fn: Callable[..., Any]) -> Callable[..., Any]:
    """CaspError -> лог + код выхода (аналог exception_handler)."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except CaspError as exc:
            logger.error("%s", exc)
            click.get_current_context().exit(exc.exit_code)

    return wrapper


def _parse_overrides(pairs: Tuple[str, ...]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError("override must look like key=value", value=pair)
        try:
            out[key.strip()] = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError("override value is not valid YAML", key=key, reason=str(exc))
    return out


def resolve_config(opts: Options, overrides: Tuple[str, ...] = ()) -> ExperimentConfig:
    """Приоритет: флаги CLI > конфиг-файл > окружение/умолчания."""
    flat: Dict[str, Any] = load_config_file(opts.config_path) if opts.config_path else {}
    flat.update(_parse_overrides(overrides))
    if opts.seed is not None:
        flat["seed"] = opts.seed
    return ExperimentConfig.from_flat(flat)


def _record(
    opts: Options,
    experiment: str,
    config: ExperimentConfig,
    fingerprint: str,
    paths: List[str],
    started: datetime,
    finished: datetime,
    status: str = RunStatus.OK,
) -> None:
    try:
        init_db(database_url(opts.out_dir))
        record_run(experiment, config.seed, fingerprint, paths, started, finished, status)
    except (SQLAlchemyError, OSError) as exc:
        # журнал не влияет на отчёты
        logger.warning("could not record run in the ledger: %s", exc)


def _run_experiment(opts: Options, name: str, overrides: Tuple[str, ...], **kwargs: Any) -> None:
    config = resolve_config(opts, overrides)
    started = datetime.now(timezone.utc)
    fingerprint = ""

    try:
        fingerprint = data_fingerprint(config)
        report = EXPERIMENTS[name](config, **kwargs)
        paths = emit_report(report, opts.out_dir, opts.formats, timestamp_now())
    except CaspError:
        _record(opts, name, config, fingerprint, [], started, datetime.now(timezone.utc), RunStatus.FAILED)
        raise
    finished = datetime.now(timezone.utc)

    str_paths = [str(p) for p in paths]
    write_manifest(opts.out_dir, config, fingerprint, started, finished, {name: str_paths})
    _record(opts, name, config, fingerprint, str_paths, started, finished)
    for p in str_paths:
        click.echo(p)


# ========== команды ==========

override_option = click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="KEY=VALUE",
    help="Override one flat config key (repeatable).",
)


@click.group()
@click.version_option(__version__, prog_name="casp")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Flat YAML config or manifest.json.")
@click.option("--seed", type=int, help="Master seed.")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Directory for reports and manifest.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "both"]), default="both", show_default=True)
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR.")
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[str],
    seed: Optional[int],
    out_dir: Optional[str],
    fmt: str,
    log_level: Optional[str],
) -> None:
    """Covariance-aware repair operators: experiment harness."""
    _setup_logging(log_level or settings.LOG_LEVEL)
    formats = FORMATS if fmt == "both" else (fmt,)
    ctx.obj = Options(config_path=config_path, seed=seed, out_dir=out_dir or settings.OUT_DIR, formats=formats)


@cli.command()
@override_option
@click.pass_obj
@_handles_errors
def ablation(opts: Options, overrides: Tuple[str, ...]) -> None:
    """Repair random candidates with every method and compare variance."""
    _run_experiment(opts, "ablation", overrides)


@cli.command()
@override_option
@click.pass_obj
@_handles_errors
def oos(opts: Options, overrides: Tuple[str, ...]) -> None:
    """Walk-forward out-of-sample Sharpe per split boundary."""
    _run_experiment(opts, "oos", overrides)


@cli.command()
@override_option
@click.pass_obj
@_handles_errors
def turnover(opts: Options, overrides: Tuple[str, ...]) -> None:
    """Simulated rebalancing: turnover, costs and net Sharpe proxy."""
    _run_experiment(opts, "turnover", overrides)


@cli.command()
@override_option
@click.option("--tune", is_flag=True, help="Grid-search RA-CASP lambda/gamma first.")
@click.pass_obj
@_handles_errors
def optimize(opts: Options, overrides: Tuple[str, ...], tune: bool) -> None:
    """Repeated MOGWO runs per method with hypervolume comparison."""
    _run_experiment(opts, "optimize", overrides, tune=tune)


@cli.command()
@override_option
@click.option("--prices", "prices_csv", type=click.Path(dir_okay=False), help="Price CSV (overrides prices_csv).")
@click.option("--esg", "esg_csv", type=click.Path(dir_okay=False), help="ESG CSV (overrides esg_csv).")
@click.pass_obj
@_handles_errors
def ingest(opts: Options, overrides: Tuple[str, ...], prices_csv: Optional[str], esg_csv: Optional[str]) -> None:
    """Load CSV data, estimate the market model and write market-model.json."""
    config = resolve_config(opts, overrides)
    prices_path = prices_csv or config.prices_csv
    if not prices_path:
        raise ConfigError("ingest needs --prices or prices_csv in the config")
    esg_path = esg_csv or config.esg_csv

    prices = load_prices(prices_path)
    esg = load_esg(esg_path, prices.asset_ids) if esg_path else None
    model = fit_model(prices, esg, config)

    out = Path(opts.out_dir) / "market-model.json"
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError("cannot write market model", path=str(out), reason=str(exc))
    logger.info("market model with %d assets written to %s", model.n, out)
    click.echo(str(out))


@cli.command()
@click.option("--limit", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--experiment", default=None, help="Only runs of this experiment.")
@click.pass_obj
@_handles_errors
def history(opts: Options, limit: int, experiment: Optional[str]) -> None:
    """List recorded runs, most recent first."""
    url = database_url(opts.out_dir)
    try:
        init_db(url)
        rows = list_runs(limit=limit, experiment=experiment)
    except (SQLAlchemyError, OSError) as exc:
        raise DataError("run ledger could not be read", url=url, reason=str(exc))
    for row in rows:
        click.echo(
            f"{row['id']}\t{row['experiment']}\t{row['started_at']}\t{row['status']}\t"
            f"{row['seed']}\t{row['data_fingerprint']}\t{','.join(row['report_paths'])}"
        )


def main() -> None:
    cli(prog_name="casp")


if __name__ == "__main__":
    main()
