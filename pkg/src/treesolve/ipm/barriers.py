"""Block barriers, centrality measures and the potential step."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from ..errors import CentralPathLost, NonpositiveT, NotInterior
from ..linalg import smat, svec, sym_kron
from .program import BlockBarrier, GeneralProgram

COSH_LOG_SWITCH = 700.0


def _psd_inverse(blk: BlockBarrier, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    X = smat(x)
    try:
        C = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        raise NotInterior("matrix block is not positive definite") from None
    logdet = 2.0 * float(np.sum(np.log(np.diag(C))))
    Ci = sla.solve_triangular(C, np.eye(X.shape[0]), lower=True, check_finite=False)
    return X, Ci.T @ Ci, logdet


def is_interior(blk: BlockBarrier, x: np.ndarray) -> bool:
    try:
        barrier_value(blk, x)
    except NotInterior:
        return False
    return True


def barrier_value(blk: BlockBarrier, x: np.ndarray) -> float:
    return barrier_grad_hess(blk, x, need_hess=False)[0]


def barrier_grad_hess(blk: BlockBarrier, x: np.ndarray, need_hess: bool = True):
    """(phi, grad, hess) of one block barrier at a strictly interior x."""
    x = np.asarray(x, dtype=float)
    kind = blk.kind
    if kind in ("psd", "psd_trace"):
        X, Xi, logdet = _psd_inverse(blk, x)
        phi = -logdet
        g = -svec(Xi)
        H = sym_kron(Xi) if need_hess else None
        if kind == "psd_trace":
            gap = blk.bound - float(np.trace(X))
            if not gap > 0:
                raise NotInterior("trace bound violated")
            e = svec(np.eye(X.shape[0]))
            phi -= math.log(gap)
            g = g + e / gap
            if need_hess:
                H = H + np.outer(e, e) / gap ** 2
        return phi, g, H
    if kind == "box":
        a = x - blk.lower
        b = blk.upper - x
        if np.any(a <= 0) or np.any(b <= 0):
            raise NotInterior("box block outside its bounds")
        phi = -float(np.sum(np.log(a)) + np.sum(np.log(b)))
        g = -1.0 / a + 1.0 / b
        H = np.diag(1.0 / a ** 2 + 1.0 / b ** 2) if need_hess else None
        return phi, g, H
    if np.any(x <= 0):
        raise NotInterior("orthant block has a nonpositive entry")
    return -float(np.sum(np.log(x))), -1.0 / x, (np.diag(1.0 / x ** 2) if need_hess else None)


@dataclass
class LocalMetric:
    """Weighted Hessian of one block with its square roots and inverse."""

    H: np.ndarray
    half: np.ndarray
    inv_half: np.ndarray
    inv: np.ndarray


def metric_from_hessian(H: np.ndarray, diagonal: bool = False) -> LocalMetric:
    if diagonal:
        d = np.diag(H)
        if np.any(d <= 0):
            raise NotInterior("Hessian is not positive definite")
        s = np.sqrt(d)
        return LocalMetric(H, np.diag(s), np.diag(1.0 / s), np.diag(1.0 / d))
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    if w[0] <= 0:
        raise NotInterior("Hessian is not positive definite")
    s = np.sqrt(w)
    return LocalMetric(H, (V * s) @ V.T, (V / s) @ V.T, (V / w) @ V.T)


def block_metric(blk: BlockBarrier, x: np.ndarray, weight: float = 1.0) -> Tuple[np.ndarray, LocalMetric]:
    """Gradient of w*phi and the metric of w*hess at x."""
    _, g, H = barrier_grad_hess(blk, x)
    return weight * g, metric_from_hessian(weight * H, diagonal=blk.kind in ("box", "orthant"))


def analytic_center(blk: BlockBarrier) -> np.ndarray:
    if blk.kind == "box":
        return 0.5 * (blk.lower + blk.upper)
    if blk.kind == "psd_trace":
        return svec(np.eye(blk.k) * blk.bound / (blk.k + 1))
    raise NotInterior(f"a {blk.kind} block has no analytic center")


# centrality -------------------------------------------------------------------


def compute_mu(x: np.ndarray, s: np.ndarray, t: float, P: GeneralProgram) -> np.ndarray:
    """mu_i = s_i / t + w_i grad phi_i(x_i)."""
    if not t > 0:
        raise NonpositiveT(f"t must be positive, got {t}")
    out = np.empty_like(np.asarray(s, dtype=float))
    for i, blk in enumerate(P.barriers):
        sl = P.sl(i)
        _, g, _ = barrier_grad_hess(blk, x[sl], need_hess=False)
        out[sl] = s[sl] / t + P.weights[i] * g
    return out


def compute_gamma(x: np.ndarray, s: np.ndarray, t: float, P: GeneralProgram) -> np.ndarray:
    """gamma_i = ||mu_i||*_{x_i} with the unweighted block Hessian."""
    mu = compute_mu(x, s, t, P)
    out = np.empty(P.n)
    for i, blk in enumerate(P.barriers):
        sl = P.sl(i)
        _, _, H = barrier_grad_hess(blk, x[sl])
        out[i] = math.sqrt(max(float(mu[sl] @ np.linalg.solve(H, mu[sl])), 0.0))
    return out


def log_potential(gamma: Sequence[float], lam: float, w: Sequence[float]) -> float:
    z = lam * np.asarray(gamma, dtype=float) / np.asarray(w, dtype=float)
    # log cosh z = z + log1p(exp(-2z)) - log 2
    lc = np.abs(z) + np.log1p(np.exp(-2.0 * np.abs(z))) - math.log(2.0)
    return float(np.logaddexp.reduce(lc)) if lc.size else -math.inf


def potential(gamma: Sequence[float], lam: float, w: Sequence[float]) -> float:
    """Sum of cosh(lam * gamma_i / w_i); switches to log space for large arguments."""
    z = lam * np.asarray(gamma, dtype=float) / np.asarray(w, dtype=float)
    if z.size == 0:
        return 0.0
    if np.max(np.abs(z)) <= COSH_LOG_SWITCH:
        return float(np.sum(np.cosh(z)))
    lp = log_potential(gamma, lam, w)
    return math.exp(lp) if lp < 709.0 else math.inf


def step_coefficients(gamma: np.ndarray, lam: float, w: np.ndarray, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-block -alpha sinh(lam g/w)/g and w^{-1} cosh^2(lam g/w).

    The first factor multiplies mu_i to give the unnormalised step; at g = 0
    it takes its limit -alpha lam / w.
    """
    z = lam * gamma / w
    if np.any(z > COSH_LOG_SWITCH / 2):
        raise CentralPathLost(f"centrality argument {float(z.max()):.3g} is out of range")
    coef = np.empty_like(z)
    small = gamma < 1e-12
    coef[small] = -alpha * lam / w[small]
    coef[~small] = -alpha * np.sinh(z[~small]) / gamma[~small]
    return coef, np.cosh(z) ** 2 / w


def compute_delta_mu(x: np.ndarray, s: np.ndarray, t: float, P: GeneralProgram,
                     alpha: float, lam: float) -> Tuple[np.ndarray, float]:
    """(delta_mu, alpha_bar): normalised step in mu-space and its normaliser."""
    mu = compute_mu(x, s, t, P)
    gamma = compute_gamma(x, s, t, P)
    coef, c2 = step_coefficients(gamma, lam, P.weights, alpha)
    abar = float(np.sum(c2))
    out = np.empty_like(mu)
    for i in range(P.n):
        sl = P.sl(i)
        out[sl] = coef[i] * mu[sl] / math.sqrt(abar)
    return out, abar


def dual_local_norm(blk: BlockBarrier, x: np.ndarray, v: np.ndarray) -> float:
    _, _, H = barrier_grad_hess(blk, x)
    return math.sqrt(max(float(v @ np.linalg.solve(H, v)), 0.0))


def primal_local_norm(blk: BlockBarrier, x: np.ndarray, v: np.ndarray) -> float:
    _, _, H = barrier_grad_hess(blk, x)
    return math.sqrt(max(float(v @ H @ v), 0.0))


def all_blocks_interior(P: GeneralProgram, x: np.ndarray) -> bool:
    return all(is_interior(blk, x[P.sl(i)]) for i, blk in enumerate(P.barriers))
