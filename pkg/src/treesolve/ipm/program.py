"""Programs of the form min c^T x s.t. Ax = b, x_i in K_i."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import StructureViolation
from ..linalg import BlockVector, SparseBlockMatrix, svec_dim
from ..treewidth import TreeDecomposition

KINDS = ("psd", "psd_trace", "box", "orthant")


@dataclass(frozen=True)
class Geometry:
    """Outer radius R, inner radius r and L = ||c||_2."""

    R: float
    r: float
    L: float


@dataclass(frozen=True)
class BlockBarrier:
    """Barrier descriptor of one variable block.

    ``psd`` is -logdet over svec'd k x k matrices.  ``psd_trace`` adds
    -log(bound - tr X), which makes the domain bounded.  ``box`` is the two-sided
    log barrier with elementwise bounds, ``orthant`` is -sum log x.
    """

    kind: str
    dim: int
    k: int = 0
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    bound: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        if self.kind in ("psd", "psd_trace") and svec_dim(self.k) != self.dim:
            raise ValueError("psd block dimension must equal k(k+1)/2")
        if self.kind == "box":
            lo = np.broadcast_to(np.asarray(self.lower, float), (self.dim,)).copy()
            hi = np.broadcast_to(np.asarray(self.upper, float), (self.dim,)).copy()
            if np.any(hi <= lo):
                raise ValueError("box bounds must satisfy lower < upper")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        if self.kind == "psd_trace" and not self.bound > 0:
            raise ValueError("trace bound must be positive")

    @property
    def nu(self) -> float:
        if self.kind == "psd":
            return float(self.k)
        if self.kind == "psd_trace":
            return float(self.k + 1)
        if self.kind == "box":
            return 2.0 * self.dim
        return float(self.dim)

    @staticmethod
    def psd(k: int) -> "BlockBarrier":
        return BlockBarrier("psd", svec_dim(k), k=k)

    @staticmethod
    def psd_trace(k: int, bound: float) -> "BlockBarrier":
        return BlockBarrier("psd_trace", svec_dim(k), k=k, bound=float(bound))

    @staticmethod
    def box(lower, upper, dim: int = 1) -> "BlockBarrier":
        return BlockBarrier("box", dim, lower=np.asarray(lower, float), upper=np.asarray(upper, float))

    @staticmethod
    def orthant(dim: int) -> "BlockBarrier":
        return BlockBarrier("orthant", dim)


@dataclass
class GeneralProgram:
    """min c^T x subject to A x = b and x_i in K_i for every variable block.

    ``A`` is kept as CSR over scalar rows; ``row_td`` is an optional tree
    decomposition of the constraint graph (rows adjacent when they share a
    variable block) used by the fast solver.
    """

    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    barriers: List[BlockBarrier]
    weights: Optional[np.ndarray] = None
    geometry: Optional[Geometry] = None
    row_td: Optional[TreeDecomposition] = None
    name: str = ""
    col_off: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if isinstance(self.A, SparseBlockMatrix):
            self.A = self.A.to_scipy()
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if isinstance(self.c, BlockVector):
            self.c = self.c.data
        self.c = np.asarray(self.c, dtype=float).ravel()
        sig = [blk.dim for blk in self.barriers]
        self.col_off = np.concatenate([[0], np.cumsum(sig)]).astype(np.int64)
        if self.weights is None:
            self.weights = np.ones(len(self.barriers))
        self.weights = np.asarray(self.weights, dtype=float)
        self.validate()
        if self.geometry is None:
            self.geometry = Geometry(R=1.0, r=1.0, L=max(float(np.linalg.norm(self.c)), 1e-12))

    def validate(self) -> None:
        n_lp = int(self.col_off[-1])
        if self.A.shape[1] != n_lp:
            raise StructureViolation(f"A has {self.A.shape[1]} columns but blocks cover {n_lp}")
        if self.A.shape[0] != self.b.shape[0]:
            raise StructureViolation("A and b disagree on the number of rows")
        if self.c.shape[0] != n_lp:
            raise StructureViolation("c does not match the variable signature")
        if self.weights.shape[0] != len(self.barriers) or np.any(self.weights < 1):
            raise StructureViolation("weights must be >= 1, one per block")

    # -- shape ----------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.barriers)

    @property
    def n_lp(self) -> int:
        return int(self.col_off[-1])

    @property
    def m_lp(self) -> int:
        return int(self.A.shape[0])

    @property
    def col_sig(self) -> List[int]:
        return [blk.dim for blk in self.barriers]

    @property
    def nus(self) -> np.ndarray:
        return np.array([blk.nu for blk in self.barriers])

    @property
    def kappa(self) -> float:
        return float(np.dot(self.weights, self.nus))

    @property
    def nu_max(self) -> float:
        return float(self.nus.max()) if self.n else 0.0

    def sl(self, i: int) -> slice:
        return slice(int(self.col_off[i]), int(self.col_off[i + 1]))

    def split(self, x: np.ndarray) -> List[np.ndarray]:
        return [x[self.sl(i)] for i in range(self.n)]

    def c_blocks(self) -> BlockVector:
        return BlockVector(self.c.copy(), tuple(self.col_sig))

    def as_block_matrix(self, row_sig: Optional[Sequence[int]] = None) -> SparseBlockMatrix:
        row_sig = tuple(row_sig) if row_sig is not None else (self.m_lp,)
        return SparseBlockMatrix.from_dense(self.A.toarray(), row_sig, tuple(self.col_sig))

    def residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.A @ x - self.b))

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def with_geometry(self, R: float, r: float) -> "GeneralProgram":
        self.geometry = Geometry(R=float(R), r=float(r), L=max(float(np.linalg.norm(self.c)), 1e-12))
        return self
