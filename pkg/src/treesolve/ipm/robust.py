"""Two-phase driver: homotopy start on [A, A, -A], then centering to eps."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import CentralPathLost, Infeasible, NotInterior, NumericalError
from .barriers import all_blocks_interior, analytic_center, barrier_grad_hess
from .centering import Budget, CenteringStats, make_engine, run_centering
from .params import SolverOptions, iteration_budget
from .program import BlockBarrier, GeneralProgram


@dataclass
class SolveResult:
    x: np.ndarray
    s: np.ndarray
    objective: float
    residual: float
    iterations: int
    budget: int
    t_final: float
    gap_bound: float
    mode: str
    phases: Dict[str, CenteringStats] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def max_step_ratio(self) -> float:
        return max((p.max_step_ratio for p in self.phases.values()), default=0.0)

    @property
    def step_bound_ok(self) -> bool:
        return all(p.step_bound_ok for p in self.phases.values())

    @property
    def restarts(self) -> int:
        return sum(p.restarts for p in self.phases.values())

    @property
    def refreshed(self) -> int:
        return sum(p.refreshed for p in self.phases.values())


def barrier_minimizer(blk: BlockBarrier, c: np.ndarray, t: float, weight: float = 1.0,
                      tol: float = 1e-8, max_iter: int = 200) -> np.ndarray:
    """argmin c^T x + t w phi(x) over one bounded block, by damped Newton."""
    x = analytic_center(blk)
    for _ in range(max_iter):
        _, g, H = barrier_grad_hess(blk, x)
        grad = c / t + weight * g
        dx = -np.linalg.solve(weight * H, grad)
        dec = math.sqrt(max(float(-grad @ dx), 0.0))
        if dec < tol:
            break
        step = 1.0 if dec < 0.25 else 1.0 / (1.0 + dec)
        while True:
            cand = x + step * dx
            try:
                barrier_grad_hess(blk, cand, need_hess=False)
                break
            except NotInterior:
                step *= 0.5
        x = cand
    return x


def project_affine(A: sp.csr_matrix, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """argmin ||z - x|| subject to A z = b."""
    if A.shape[0] == 0:
        return x.copy()
    r = b - A @ x
    AAt = sp.csc_matrix(A @ A.T)
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.MatrixRankWarning)
        try:
            y = spla.spsolve(AAt, r)
        except RuntimeError:
            y = np.full(A.shape[0], np.nan)
    if not np.all(np.isfinite(y)):
        y = np.linalg.lstsq(AAt.toarray(), r, rcond=None)[0]
    z = x + A.T @ y
    if np.linalg.norm(A @ z - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
        raise Infeasible("the equality constraints are inconsistent")
    return z


def phase_one_program(P: GeneralProgram, x2: np.ndarray, x3: np.ndarray, t0: float) -> GeneralProgram:
    n = P.n
    barriers = list(P.barriers) + [BlockBarrier.orthant(blk.dim) for blk in P.barriers] * 2
    A = sp.hstack([P.A, P.A, -P.A], format="csr")
    c = np.concatenate([P.c, t0 / x2, t0 / x3])
    w = np.concatenate([P.weights, np.ones(2 * n)])
    return GeneralProgram(A, P.b, c, barriers, weights=w, geometry=P.geometry, row_td=P.row_td,
                          name=(P.name + "/phase1") if P.name else "phase1")


def initial_point(P: GeneralProgram, options: SolverOptions):
    """Homotopy start: a centred point of the phase-one program and its t."""
    g = P.geometry
    LR = g.L * g.R
    t0 = (P.n_lp + P.kappa) ** options.exponent * 128.0 * LR * g.R / g.r
    x_c = np.concatenate([barrier_minimizer(blk, P.c[P.sl(i)], t0, float(P.weights[i]))
                          for i, blk in enumerate(P.barriers)])
    x_o = project_affine(P.A, P.b, x_c)
    S = 3.0 * max(g.R, float(np.max(np.abs(x_o - x_c))) if x_c.size else 0.0)
    x2 = S + x_o - x_c
    x3 = np.full_like(x_c, S)
    P1 = phase_one_program(P, x2, x3, t0)
    x = np.concatenate([x_c, x2, x3])
    s = np.concatenate([P.c, t0 / x2, t0 / x3])
    return P1, x, s, t0


def robust_ipm(P: GeneralProgram, eps: float, options: Optional[SolverOptions] = None) -> SolveResult:
    """Return x with A x = b, x interior and c^T x <= OPT + eps L R."""
    options = options or SolverOptions()
    start = time.perf_counter()
    g = P.geometry
    LR = g.L * g.R
    mode = options.resolved_mode(P)
    opts = options if mode == options.mode else SolverOptions(**{**options.__dict__, "mode": mode})
    budget = Budget(iteration_budget(P, eps, options.budget_multiplier))
    phases: Dict[str, CenteringStats] = {}

    P1, x, s, t0 = initial_point(P, opts)
    prm1 = opts.params(P1, t0, LR)
    try:
        x, s, st1 = run_centering(make_engine(P1, prm1, opts), P1, x, s, t0, LR, prm1, budget,
                                  opts.callback, "phase1", opts.check_steps, opts.trace_iterates)
    except (CentralPathLost, NotInterior) as exc:
        raise Infeasible(f"phase one diverged: {exc}") from exc
    phases["phase1"] = st1
    n_lp = P.n_lp
    x = x[:n_lp] + x[n_lp:2 * n_lp] - x[2 * n_lp:]
    s = s[:n_lp]
    if not all_blocks_interior(P, x):
        raise Infeasible("phase one ended outside the domain")

    t_end = eps / (4.0 * P.kappa) * LR
    prm2 = opts.params(P, LR, t_end)
    x, s, st2 = run_centering(make_engine(P, prm2, opts), P, x, s, LR, t_end, prm2, budget,
                              opts.callback, "phase2", opts.check_steps, opts.trace_iterates)
    phases["phase2"] = st2
    return SolveResult(x=x, s=s, objective=P.objective(x), residual=P.residual(x), iterations=budget.used,
                       budget=budget.limit, t_final=st2.t_final, gap_bound=st2.t_final * P.kappa,
                       mode=mode, phases=phases, seconds=time.perf_counter() - start)
