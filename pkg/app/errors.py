# app/errors.py
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


class CaspError(Exception):
    """
    Базовая ошибка приложения.

    Аналог HTTPException: вместо status_code у нас exit_code,
    который CLI отдаёт наружу, а detail: человекочитаемое сообщение.
    """

    exit_code: int = 1

    def __init__(self, detail: str, **context: Any) -> None:
        super().__init__(detail)
        self.detail = detail
        self.context: Dict[str, Any] = context

    def __str__(self) -> str:
        if not self.context:
            return self.detail
        extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.context.items()))
        return f"{self.detail} ({extra})"


# ---------- конфигурация ----------


class ConfigError(CaspError):
    exit_code = 2


class InvalidArgumentError(CaspError):
    exit_code = 2


# ---------- данные ----------


class DataError(CaspError):
    exit_code = 3


class DataFormatError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class OutputError(DataError):
    """Не удалось записать отчёт или манифест."""


# ---------- численные сбои ----------


class NumericalError(CaspError):
    exit_code = 4


class InfeasibleConstraintsError(NumericalError):
    pass


class UndefinedMetricError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    """Решатель не сошёлся: несём лучшую найденную точку и её невязку."""

    def __init__(
        self,
        detail: str,
        best_iterate: Optional[np.ndarray] = None,
        residual: float = float("nan"),
        **context: Any,
    ) -> None:
        super().__init__(detail, residual=residual, **context)
        self.best_iterate = best_iterate
        self.residual = residual


class RepairBatchError(NumericalError):
    """
    Пакетный ремонт: часть кандидатов упала.

    failures: список (индекс, ошибка); results: всё, что посчиталось
    (None на месте упавших).
    """

    def __init__(
        self,
        failures: List[Tuple[int, CaspError]],
        results: List[Optional[tuple]],
    ) -> None:
        first_idx, first_err = failures[0]
        super().__init__(
            f"{len(failures)} of {len(results)} candidates failed to repair",
            first_index=first_idx,
            first_error=first_err.detail,
        )
        self.failures = failures
        self.results = results
