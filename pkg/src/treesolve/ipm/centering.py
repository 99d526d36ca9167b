"""The path-following loop shared by the reference and fast engines."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..errors import IterationBudgetExceeded, NonpositiveT
from .cpm import CentralPathMaintenance
from .exactds import FastStructure
from .params import CenteringParams, SolverOptions
from .program import GeneralProgram
from .reference import ReferenceEngine

STEP_SLACK = 1e-9


@dataclass
class Budget:
    limit: int
    used: int = 0

    def charge(self) -> None:
        self.used += 1
        if self.used > self.limit:
            raise IterationBudgetExceeded(f"iteration budget of {self.limit} steps exceeded")


@dataclass
class CenteringStats:
    steps: int = 0
    restarts: int = 0
    refreshed: int = 0
    max_step_ratio: float = 0.0
    step_bound_ok: bool = True
    max_log_phi: float = -np.inf
    seconds: float = 0.0
    t_final: float = 0.0


def make_engine(P: GeneralProgram, params: CenteringParams, options: SolverOptions,
                structure: Optional[FastStructure] = None):
    if options.resolved_mode(P) == "fast":
        S = structure if structure is not None else FastStructure(P, options.merge_tau)
        return CentralPathMaintenance(S, params, seed=options.seed, sketch_dim=options.sketch_rows(P, params),
                                      forced_refresh=options.forced_refresh)
    return ReferenceEngine(P, params)


def run_centering(engine, P: GeneralProgram, x: np.ndarray, s: np.ndarray, t_start: float, t_end: float,
                  params: CenteringParams, budget: Optional[Budget] = None,
                  callback: Optional[Callable[[dict], None]] = None, phase: str = "",
                  check_steps: bool = True, trace: bool = False) -> Tuple[np.ndarray, np.ndarray, CenteringStats]:
    """Follow the path from t_start down to t_end; the last step is taken at t_end.

    With ``trace`` the callback also receives the current primal iterate.
    """
    if not (t_start > 0 and t_end > 0):
        raise NonpositiveT("centering needs positive t_start and t_end")
    stats = CenteringStats()
    t0 = time.perf_counter()
    t = float(t_start)
    engine.initialize(x, s, t)
    limit = (9.0 / 8.0) * params.alpha + STEP_SLACK
    while True:
        if budget is not None:
            budget.charge()
        info = engine.multiply_and_move(t)
        stats.steps += 1
        stats.restarts += int(info.restarted)
        stats.refreshed += info.refreshed
        ratio = info.step_norm / params.alpha if params.alpha > 0 else 0.0
        stats.max_step_ratio = max(stats.max_step_ratio, ratio)
        stats.max_log_phi = max(stats.max_log_phi, info.log_phi)
        if check_steps and info.step_norm > limit:
            stats.step_bound_ok = False
        if callback is not None:
            rec = {"phase": phase, "t": t, "log_phi": info.log_phi, "gap": t * P.kappa,
                   "restart": info.restarted, "refreshed": info.refreshed, "step_norm": info.step_norm}
            if trace:
                rec["x"] = engine.output()[0]
            callback(rec)
        if t <= t_end:
            break
        t = max((1.0 - params.h) * t, t_end)
    stats.t_final = t
    stats.seconds = time.perf_counter() - t0
    x, s = engine.output()
    return x, s, stats


def reference_centering(P: GeneralProgram, x: np.ndarray, s: np.ndarray, t_start: float, t_end: float,
                        params: Optional[CenteringParams] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Dense oracle: x_bar = x, s_bar = s and t_bar = t at every step."""
    params = params or CenteringParams.practical(P, t_start, t_end)
    x, s, _ = run_centering(ReferenceEngine(P, params), P, x, s, t_start, t_end, params)
    return x, s
