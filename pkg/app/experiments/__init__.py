"""Четыре эксперимента харнесса: ablation, oos, turnover, optimize."""
from app.experiments.ablation import run_ablation
from app.experiments.optimize import run_optimize, tune_return_params
from app.experiments.oos import run_oos
from app.experiments.turnover import run_turnover

EXPERIMENTS = {
    "ablation": run_ablation,
    "oos": run_oos,
    "turnover": run_turnover,
    "optimize": run_optimize,
}
