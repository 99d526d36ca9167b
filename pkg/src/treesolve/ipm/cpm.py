"""Central path maintenance: ExactDS plus ApproxDS with restarts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import CentralPathLost
from ..sketch import JLMatrix, default_sketch_dim
from .approxds import ApproxDS
from .barriers import log_potential
from .exactds import ExactDS, FastStructure
from .params import CenteringParams


@dataclass
class StepInfo:
    t: float
    step_norm: float
    log_phi: float
    restarted: bool = False
    refreshed: int = 0


class CentralPathMaintenance:
    """Fast engine.  With ``forced_refresh`` every block of (x_bar, s_bar, t_bar)
    is reset to the exact iterate before each step, which makes the steps
    identical to the dense reference."""

    def __init__(self, S: FastStructure, params: CenteringParams, seed: int = 0,
                 sketch_dim: Optional[int] = None, forced_refresh: bool = False):
        self.S = S
        self.P = S.P
        self.base_params = params
        self.params = params
        self.forced_refresh = forced_refresh
        r = sketch_dim if sketch_dim is not None else default_sketch_dim(self.P.n_lp, params.delta_apx)
        self.phi = JLMatrix(r, self.P.n_lp, seed)
        self.exact = ExactDS(S, params)
        self.approx: Optional[ApproxDS] = None
        self.ell = 0
        self.restarts = 0
        self.refreshed_total = 0

    def initialize(self, x: np.ndarray, s: np.ndarray, t: float) -> None:
        self.params = self.base_params.at_t(t)
        self.exact.params = self.params
        self.exact.initialize(x, s, x, s, t)
        self.ell = 0
        if not self.forced_refresh:
            self.approx = ApproxDS(self.exact, self.params, self.phi)

    def multiply_and_move(self, t: float) -> StepInfo:
        ex = self.exact
        restarted = False
        refreshed = 0
        if self.forced_refresh:
            x, s = ex.output()
            P = self.P
            ex.update({i: (x[P.sl(i)], s[P.sl(i)]) for i in range(P.n)}, t_bar=t)
            refreshed = P.n
        else:
            self.ell += 1
            if abs(ex.t_bar - t) > ex.t_bar * self.params.eps_t or self.ell > self.params.q:
                x, s = ex.output()
                self.initialize(x, s, t)
                self.restarts += 1
                restarted = True
        lp = log_potential(ex.gamma, self.params.lam, self.P.weights)
        if lp > self.params.potential_limit(self.P.n):
            raise CentralPathLost(f"potential left the safe region at t={t:.4g} (log phi={lp:.3g})")
        bx, bs = ex.move()
        if not self.forced_refresh:
            changes = self.approx.move_and_query(bx, bs)
            deltas = ex.update(changes)
            self.approx.update(deltas)
            refreshed = len(changes)
        self.refreshed_total += refreshed
        return StepInfo(t, ex.last_step_norm, lp, restarted, refreshed)

    def output(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.exact.output()

    @property
    def gamma_max(self) -> float:
        return float(np.max(self.exact.gamma)) if self.P.n else 0.0
