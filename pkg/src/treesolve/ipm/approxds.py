"""Sketch-driven detection of blocks whose explicit approximation went stale."""

from __future__ import annotations

import math
from typing import Dict, Optional, Set, Tuple

import numpy as np

from ..sketch import BatchSketch, JLMatrix
from .exactds import ExactDS, UpdateDeltas
from .params import CenteringParams


class ApproxDS:
    def __init__(self, exact: ExactDS, params: CenteringParams, phi: JLMatrix):
        self.exact = exact
        self.params = params
        self.phi = phi
        P = exact.P
        self.x_tilde = [b.copy() for b in exact.x_bar]
        self.s_tilde = [b.copy() for b in exact.s_bar]
        Hx = np.concatenate([exact.metric[i].half @ exact.x_hat[P.sl(i)] for i in range(P.n)])
        Hs = np.concatenate([exact.metric[i].inv_half @ exact.s_hat[P.sl(i)] for i in range(P.n)])
        self.bs = BatchSketch(exact.S.ctx, phi, [m.inv_half for m in exact.metric], exact.h, exact.eps_x,
                              exact.eps_s, Hx, Hs, exact.c_x, exact.beta_x, exact.beta_s,
                              keep_history=params.q + 2, F=exact.F)
        self.ell = 0
        self.eps_x = params.eps_apx_x / params.query_divisor
        self.eps_s = params.eps_apx_s / params.query_divisor
        self.last_candidates = 0

    def _windows(self):
        ell = self.ell
        yield ell
        j = 1
        while (1 << j) <= ell:
            if ell % (1 << j) == 0:
                yield ell - (1 << j) + 1
            j += 1

    def _candidates(self, primal: bool) -> Set[int]:
        eps = self.eps_x if primal else self.eps_s
        found: Set[int] = set()
        for start in self._windows():
            hits = self.bs.query_x(start, eps) if primal else self.bs.query_s(start, eps)
            found.update(hits)
        return found

    def move_and_query(self, beta_x: float, beta_s: float) -> Dict[int, Tuple[Optional[np.ndarray], Optional[np.ndarray]]]:
        self.bs.move(beta_x, beta_s)
        ex = self.exact
        changes: Dict[int, Tuple[Optional[np.ndarray], Optional[np.ndarray]]] = {}
        cx = self._candidates(True)
        cs = self._candidates(False)
        self.last_candidates = len(cx) + len(cs)
        for i in cx:
            xi = ex.query_x(i)
            d = xi - self.x_tilde[i]
            met = ex.metric[i]
            if math.sqrt(max(float(d @ met.H @ d), 0.0)) > self.eps_x:
                changes[i] = (xi, None)
        for i in cs:
            si = ex.query_s(i)
            d = si - self.s_tilde[i]
            met = ex.metric[i]
            if math.sqrt(max(float(d @ met.inv @ d), 0.0)) > self.eps_s:
                changes[i] = (changes.get(i, (None, None))[0], si)
        for i, (xi, si) in changes.items():
            if xi is not None:
                self.x_tilde[i] = xi
            if si is not None:
                self.s_tilde[i] = si
        return changes

    def update(self, deltas: UpdateDeltas) -> None:
        self.bs.update(deltas.changed_H, deltas.old_cols, deltas.d_h, deltas.d_eps_x, deltas.d_eps_s,
                       deltas.d_Hx_hat, deltas.d_Hs_hat, deltas.d_cx)
        self.ell += 1
