"""Independent reference solvers used to derive expected values.

Nothing here imports treesolve: the SDP oracle is a textbook primal barrier
method on full matrices, the LP oracle enumerates bases.
"""

from __future__ import annotations

import itertools
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np


def _sym_basis(n: int) -> List[np.ndarray]:
    """Orthonormal basis of symmetric n x n matrices under the trace inner product."""
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / math.sqrt(2.0)
            out.append(E)
    return out


def dense_sdp(C: np.ndarray, A: Sequence[np.ndarray], b: Sequence[float], sense: str = "min",
              X0: Optional[np.ndarray] = None, tol: float = 1e-10) -> Tuple[float, np.ndarray]:
    """Optimum of C . X subject to A_i . X = b_i, X PSD, from a strictly feasible X0.

    Sequential unconstrained minimisation of t C.X - logdet X over the affine
    set, each stage solved by Newton in a null-space basis of the
    constraints (so iterates stay exactly feasible) with backtracking.
    """
    C = np.asarray(C, float)
    n = C.shape[0]
    sgn = -1.0 if sense == "max" else 1.0
    Cm = sgn * C
    X = np.eye(n) if X0 is None else np.array(X0, float)
    basis = _sym_basis(n)
    c = np.array([np.sum(Cm * E) for E in basis])
    Am = np.array([[np.sum(np.asarray(Ai, float) * E) for E in basis] for Ai in A]).reshape(len(A), len(basis))
    resid = np.array([np.sum(np.asarray(Ai, float) * X) for Ai in A]) - np.asarray(b, float)
    if resid.size and np.max(np.abs(resid)) > 1e-9:
        raise ValueError("X0 is not feasible")
    if np.min(np.linalg.eigvalsh(X)) <= 0:
        raise ValueError("X0 is not positive definite")
    if Am.shape[0]:
        _, sv, Vt = np.linalg.svd(Am)
        rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
        Z = Vt[rank:].T
    else:
        Z = np.eye(len(basis))
    t = 1.0
    while n / t > tol:
        for _ in range(200):
            Xi = np.linalg.inv(X)
            g = t * c - np.array([np.sum(Xi * E) for E in basis])
            XE = [Xi @ E for E in basis]
            H = np.array([[np.sum(a * b.T) for b in XE] for a in XE])
            Hz = Z.T @ H @ Z
            d = Z @ np.linalg.solve(Hz, -(Z.T @ g))
            dec = float(-g @ d)
            if dec / 2 < 1e-12:
                break
            D = sum(di * E for di, E in zip(d, basis))
            f0 = t * float(np.sum(Cm * X)) - np.linalg.slogdet(X)[1]
            step = 1.0
            while True:
                Y = X + step * D
                if np.min(np.linalg.eigvalsh(Y)) > 0:
                    f1 = t * float(np.sum(Cm * Y)) - np.linalg.slogdet(Y)[1]
                    if f1 <= f0 - 0.25 * step * dec:
                        break
                step *= 0.5
                if step < 1e-14:
                    break
            X = Y
        t *= 8.0
    return float(np.sum(C * X)), X


def maxcut_oracle(n: int, edges: Sequence[Tuple[int, int]], k: int = 2) -> float:
    """Unit-diagonal SDP relaxation value (k-1)/(2k) L . X (equalities only, so k = 2)."""
    if k != 2:
        raise ValueError("the oracle handles the equality-only relaxation")
    L = np.zeros((n, n))
    for u, v in edges:
        L[u, u] += 1
        L[v, v] += 1
        L[u, v] -= 1
        L[v, u] -= 1
    A = []
    for i in range(n):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        A.append(E)
    return dense_sdp(L / 4.0, A, [1.0] * n, sense="max")[0]


def theta_oracle(n: int, edges: Sequence[Tuple[int, int]]) -> float:
    """Value of: minimise [[I, 1], [1^T, 0]] . X with X_ij = 0 on non-edges and X_oo = 1."""
    N = n + 1
    C = np.zeros((N, N))
    C[:n, :n] = np.eye(n)
    C[:n, n] = C[n, :n] = 1.0
    present = {(min(u, v), max(u, v)) for u, v in edges}
    A = []
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in present:
                E = np.zeros((N, N))
                E[u, v] = E[v, u] = 0.5
                A.append(E)
    E = np.zeros((N, N))
    E[n, n] = 1.0
    A.append(E)
    b = [0.0] * (len(A) - 1) + [1.0]
    return dense_sdp(C, A, b)[0]


def lp_basis_enumeration(A: np.ndarray, b: np.ndarray, c: np.ndarray, lower: np.ndarray,
                         upper: np.ndarray) -> Tuple[float, np.ndarray]:
    """min c^T x, A x = b, lower <= x <= upper, by enumerating bases.

    For a basis B the reduced costs fix every nonbasic variable at the bound
    that minimises its cost; when the resulting basic part lies inside its
    bounds the point is a vertex satisfying the optimality conditions.
    Returns the best such vertex (all of them share the optimal value).
    """
    A = np.asarray(A, float)
    m, n = A.shape
    best = (math.inf, None)
    for B in itertools.combinations(range(n), m):
        AB = A[:, B]
        if m and abs(np.linalg.det(AB)) < 1e-12:
            continue
        y = np.linalg.solve(AB.T, c[list(B)]) if m else np.zeros(0)
        r = c - A.T @ y
        x = np.where(r > 0, lower, upper).astype(float)
        if m:
            N = [j for j in range(n) if j not in B]
            xB = np.linalg.solve(AB, b - A[:, N] @ x[N])
            x[list(B)] = xB
            if np.any(xB < lower[list(B)] - 1e-9) or np.any(xB > upper[list(B)] + 1e-9):
                continue
        val = float(c @ x)
        if val < best[0]:
            best = (val, x)
    if best[1] is None:
        raise ValueError("no optimal basis found")
    return best


def random_box_lp(rng: np.random.Generator, n: int = 20, m: int = 3):
    """Feasible box LP with a strictly interior point."""
    A = rng.normal(size=(m, n))
    lower = -rng.uniform(0.5, 2.0, size=n)
    upper = rng.uniform(0.5, 2.0, size=n)
    x0 = lower + (upper - lower) * rng.uniform(0.2, 0.8, size=n)
    b = A @ x0
    c = rng.normal(size=n)
    return A, b, c, lower, upper


def c5_maxcut_closed_form() -> float:
    """Odd cycle relaxation value n/2 (1 + cos(pi/n)) at n = 5."""
    return 2.5 * (1.0 + math.cos(math.pi / 5.0))
