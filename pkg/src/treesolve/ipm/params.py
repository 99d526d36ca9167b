"""Step-size, restart and sketch parameters of the centering loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

from ..sketch import default_sketch_dim, practical_sketch_dim
from .program import GeneralProgram


@dataclass(frozen=True)
class CenteringParams:
    lam: float
    eps_bar: float
    alpha: float
    eps_t: float
    h: float
    t_start: float
    t_end: float
    q: int
    w: float
    N: int
    zeta_x: float
    zeta_s: float
    eps_apx_x: float
    eps_apx_s: float
    delta_apx: float
    gamma_safe: float = 1.0 / 64.0
    divisor: float = 0.0

    @staticmethod
    def _common(P: GeneralProgram, lam: float, eps_bar: float, alpha: float, eps_t: float, h: float,
                t_start: float, t_end: float, q: Optional[int], gamma_safe: float,
                divisor: float = 0.0) -> "CenteringParams":
        n = max(P.n, 1)
        nu_max = max(P.nu_max, 1.0)
        w = 1.0
        N = max(1, int(math.ceil(math.sqrt(n * nu_max * w))))
        if q is None:
            q = max(2, int(math.ceil(2.0 * math.sqrt(n * nu_max))))
        return CenteringParams(
            lam=lam, eps_bar=eps_bar, alpha=alpha, eps_t=eps_t, h=h,
            t_start=float(t_start), t_end=float(t_end), q=int(q), w=w, N=N,
            zeta_x=2.0 * alpha / math.sqrt(w), zeta_s=2.0 * alpha * t_start * math.sqrt(w),
            eps_apx_x=eps_bar, eps_apx_s=eps_bar * t_start * w, delta_apx=1.0 / N,
            gamma_safe=gamma_safe, divisor=divisor)

    @classmethod
    def theory(cls, P: GeneralProgram, t_start: float, t_end: float, q: Optional[int] = None) -> "CenteringParams":
        """Conservative constants: lam = 16 ln(n sum w + 1), eps_bar = 1/(120 lam), alpha = eps_bar/2."""
        lam = 16.0 * math.log(P.n * float(P.weights.sum()) + 1.0)
        eps_bar = 1.0 / (120.0 * lam)
        alpha = eps_bar / 2.0
        ratio = min(float(w / (w + nu)) for w, nu in zip(P.weights, P.nus))
        h = alpha / (64.0 * math.sqrt(P.kappa))
        return cls._common(P, lam, eps_bar, alpha, eps_bar * ratio, h, t_start, t_end, q, 1.0 / 64.0)

    @classmethod
    def practical(cls, P: GeneralProgram, t_start: float, t_end: float, *, alpha: float = 0.5,
                  eps_bar: float = 0.1, lam: Optional[float] = None, h_const: float = 2.0,
                  eps_t: Optional[float] = None, q: Optional[int] = None,
                  gamma_safe: float = 0.5, divisor: float = 1.0) -> "CenteringParams":
        """Empirically tuned constants with the same functional form.

        ``divisor`` scales the sketch query threshold; 0 selects 2 log2(q) + 1.
        """
        if lam is None:
            lam = 2.0 * math.log(P.n * float(P.weights.sum()) + 1.0) + 4.0
        ratio = min(float(w / (w + nu)) for w, nu in zip(P.weights, P.nus))
        if eps_t is None:
            eps_t = eps_bar * ratio
        h = alpha / (h_const * math.sqrt(P.kappa))
        return cls._common(P, lam, eps_bar, alpha, eps_t, h, t_start, t_end, q, gamma_safe, divisor)

    def at_t(self, t_bar: float) -> "CenteringParams":
        """Rescale the dual-side thresholds for a new reference t."""
        return replace(self, zeta_s=2.0 * self.alpha * t_bar * math.sqrt(self.w),
                       eps_apx_s=self.eps_bar * t_bar * self.w)

    @property
    def query_divisor(self) -> float:
        if self.divisor > 0:
            return self.divisor
        return 2.0 * math.log2(max(self.q, 2)) + 1.0

    def potential_limit(self, n: int) -> float:
        """log of the potential level treated as leaving the central path."""
        z = self.lam * self.gamma_safe
        return math.log(max(n, 1)) + z + math.log1p(math.exp(-2 * z)) - math.log(2.0)


AUTO_FAST_NLP = 500


@dataclass
class SolverOptions:
    """Everything robust_ipm needs beyond the program and eps.

    ``mode`` is "reference", "fast" or "auto" (fast once n_lp reaches 500).
    """

    mode: str = "reference"
    preset: str = "practical"
    forced_refresh: bool = False
    seed: int = 0
    sketch_dim: Optional[int] = None
    budget_multiplier: float = 1.0
    t0_exponent: Optional[float] = None
    alpha: Optional[float] = None
    eps_bar: Optional[float] = None
    lam: Optional[float] = None
    h_const: Optional[float] = None
    eps_t: Optional[float] = None
    q: Optional[int] = None
    gamma_safe: Optional[float] = None
    divisor: Optional[float] = None
    merge_tau: int = 0
    check_steps: bool = True
    trace_iterates: bool = False
    callback: Optional[Callable[[dict], None]] = None

    def params(self, P: GeneralProgram, t_start: float, t_end: float) -> CenteringParams:
        if self.preset == "theory":
            return CenteringParams.theory(P, t_start, t_end, q=self.q)
        kw = {k: getattr(self, k) for k in ("alpha", "eps_bar", "lam", "h_const", "eps_t", "q", "gamma_safe",
                                          "divisor")
              if getattr(self, k) is not None}
        return CenteringParams.practical(P, t_start, t_end, **kw)

    def sketch_rows(self, P: GeneralProgram, params: CenteringParams) -> int:
        if self.sketch_dim is not None:
            return int(self.sketch_dim)
        if self.preset == "theory":
            return default_sketch_dim(P.n_lp, params.delta_apx)
        return practical_sketch_dim(P.n_lp, params.delta_apx)

    def resolved_mode(self, P: GeneralProgram) -> str:
        if P.m_lp == 0:
            return "reference"
        if self.mode == "auto":
            return "fast" if P.n_lp >= AUTO_FAST_NLP else "reference"
        return self.mode

    @property
    def exponent(self) -> float:
        if self.t0_exponent is not None:
            return self.t0_exponent
        return 5.0 if self.preset == "theory" else 1.0


def iteration_budget(P: GeneralProgram, eps: float, multiplier: float = 1.0) -> int:
    """40 sqrt(kappa) log(n) log(n_lp kappa R / (eps r)), scaled by ``multiplier``."""
    g = P.geometry
    n = max(P.n, 2)
    inner = max(P.n_lp * P.kappa * g.R / (eps * g.r), math.e)
    return int(math.ceil(multiplier * 40.0 * math.sqrt(P.kappa) * math.log(n) * math.log(inner)))
