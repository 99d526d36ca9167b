"""Dense reference engine: every step recomputes H and (A H^{-1} A^T)^{-1}."""

from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from ..errors import CentralPathLost, NotPositiveDefinite
from .barriers import block_metric, log_potential, step_coefficients
from .cpm import StepInfo
from .params import CenteringParams
from .program import GeneralProgram


def newton_direction(P: GeneralProgram, x: np.ndarray, s: np.ndarray, t: float, params: CenteringParams,
                     A_dense: Optional[np.ndarray] = None):
    """(delta_x, delta_s, ||delta_x||_x, gamma) at x_bar = x, s_bar = s, t_bar = t.

    Everything is formed densely; this is the oracle, not the fast path.
    """
    n = P.n
    mets = []
    gamma = np.zeros(n)
    mus: List[np.ndarray] = []
    for i, blk in enumerate(P.barriers):
        sl = P.sl(i)
        g, met = block_metric(blk, x[sl], float(P.weights[i]))
        mu = s[sl] / t + g
        mets.append(met)
        mus.append(mu)
        gamma[i] = math.sqrt(max(float(P.weights[i]) * float(mu @ met.inv @ mu), 0.0))
    coef, c2 = step_coefficients(gamma, params.lam, P.weights, params.alpha)
    scale = 1.0 / math.sqrt(float(np.sum(c2)))
    dmu = np.concatenate([coef[i] * scale * mus[i] for i in range(n)]) if n else np.zeros(0)
    Hinv = sla.block_diag(*[m.inv for m in mets]) if n else np.zeros((0, 0))
    Hinv_dmu = Hinv @ dmu
    if P.m_lp:
        A = P.A.toarray() if A_dense is None else A_dense
        M = A @ (Hinv @ A.T)
        try:
            cf = sla.cho_factor(M, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("A H^{-1} A^T is not positive definite") from None
        y = sla.cho_solve(cf, A @ Hinv_dmu, check_finite=False)
        Aty = A.T @ y
    else:
        Aty = np.zeros(P.n_lp)
    dx = Hinv_dmu - Hinv @ Aty
    ds = t * Aty
    H = sla.block_diag(*[m.H for m in mets]) if n else np.zeros((0, 0))
    norm = math.sqrt(max(float(dx @ (H @ dx)), 0.0))
    return dx, ds, norm, gamma


class ReferenceEngine:
    def __init__(self, P: GeneralProgram, params: CenteringParams):
        self.P = P
        self.params = params
        self.restarts = 0
        self.refreshed_total = 0
        self.gamma = np.zeros(P.n)
        self.A_dense = P.A.toarray()

    def initialize(self, x: np.ndarray, s: np.ndarray, t: float) -> None:
        self.x = np.array(x, dtype=float)
        self.s = np.array(s, dtype=float)

    def multiply_and_move(self, t: float) -> StepInfo:
        dx, ds, norm, gamma = newton_direction(self.P, self.x, self.s, t, self.params, self.A_dense)
        self.gamma = gamma
        lp = log_potential(gamma, self.params.lam, self.P.weights)
        if lp > self.params.potential_limit(self.P.n):
            raise CentralPathLost(f"potential left the safe region at t={t:.4g} (log phi={lp:.3g})")
        self.x = self.x + dx
        self.s = self.s + ds
        return StepInfo(t, norm, lp, False, self.P.n)

    def output(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.x.copy(), self.s.copy()

    @property
    def gamma_max(self) -> float:
        return float(np.max(self.gamma)) if self.P.n else 0.0
