"""Dense symmetric kernels and block-structured containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .errors import NotPositiveDefinite, NotPSD, RankDeficient, SingularHessian


@dataclass(frozen=True)
class NumericPolicy:
    """Every tolerance the dense kernels use, in one place."""

    pivot_rel: float = 1e-12
    psd_rel: float = 1e-8
    rank_rel: float = 1e-12
    abs_floor: float = 1e-14

    def floor(self, value: float) -> float:
        return max(value, self.abs_floor)


POLICY = NumericPolicy()


def dense_cholesky(M: np.ndarray, policy: NumericPolicy = POLICY) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    M = np.asarray(M, dtype=float)
    k = M.shape[0]
    if k == 0:
        return np.zeros((0, 0))
    scale = policy.floor(float(np.max(np.abs(np.diag(M)))))
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    piv = np.diag(L) ** 2
    if np.any(piv <= policy.pivot_rel * scale) or not np.all(np.isfinite(L)):
        raise NotPositiveDefinite(f"pivot {piv.min():.3e} below tolerance")
    return L


def sym_sqrt(M: np.ndarray, policy: NumericPolicy = POLICY) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape[0] == 0:
        return np.zeros((0, 0))
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    norm = float(np.max(np.abs(lam)))
    if lam[0] < -policy.psd_rel * norm:
        raise NotPSD(f"minimum eigenvalue {lam[0]:.3e}")
    lam = np.clip(lam, 0.0, None)
    return (V * np.sqrt(lam)) @ V.T


def sym_inv_sqrt(M: np.ndarray, policy: NumericPolicy = POLICY) -> np.ndarray:
    """Inverse square root of a symmetric positive definite matrix."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] == 0:
        return np.zeros((0, 0))
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    if lam[0] <= policy.pivot_rel * policy.floor(float(np.max(np.abs(lam)))):
        raise SingularHessian("matrix is numerically singular")
    return (V / np.sqrt(lam)) @ V.T


def sqrt_and_inv_sqrt(M: np.ndarray, policy: NumericPolicy = POLICY) -> Tuple[np.ndarray, np.ndarray]:
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    if lam[0] <= policy.pivot_rel * policy.floor(float(np.max(np.abs(lam)))):
        raise SingularHessian("matrix is numerically singular")
    r = np.sqrt(lam)
    return (V * r) @ V.T, (V / r) @ V.T


def local_norm(v: np.ndarray, H: np.ndarray, dual: bool = False, policy: NumericPolicy = POLICY) -> float:
    """sqrt(v^T H v), or sqrt(v^T H^{-1} v) when ``dual`` is set."""
    v = np.asarray(v, dtype=float)
    H = np.asarray(H, dtype=float)
    if v.size == 0:
        return 0.0
    if not dual:
        return float(np.sqrt(max(float(v @ H @ v), 0.0)))
    try:
        c, low = sla.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian("Hessian block is singular") from exc
    d = np.diag(c) ** 2
    if np.any(d <= policy.pivot_rel * policy.floor(float(np.max(np.abs(np.diag(H)))))):
        raise SingularHessian("Hessian block is singular")
    return float(np.sqrt(max(float(v @ sla.cho_solve((c, low), v)), 0.0)))


def qr_positive(M: np.ndarray, policy: NumericPolicy = POLICY) -> Tuple[np.ndarray, np.ndarray]:
    """QR with the signs fixed so that R has a positive diagonal.

    R is upper triangular, i.e. the transpose of a lower factor; for
    M = S a symmetric square root of A, R^T is the Cholesky factor of A.
    """
    M = np.asarray(M, dtype=float)
    Q, R = np.linalg.qr(M)
    d = np.diag(R)
    tol = policy.rank_rel * policy.floor(float(np.linalg.norm(M)))
    if np.any(np.abs(d) <= tol):
        raise RankDeficient("matrix is rank deficient")
    sgn = np.where(d < 0, -1.0, 1.0)
    return Q * sgn, sgn[:, None] * R


# symmetric vectorization ----------------------------------------------------

_SVEC_CACHE: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def svec_index(k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row/col indices of the upper triangle (row-major) and the entry scales."""
    if k not in _SVEC_CACHE:
        iu, ju = np.triu_indices(k)
        scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
        _SVEC_CACHE[k] = (iu, ju, scale)
    return _SVEC_CACHE[k]


def svec_dim(k: int) -> int:
    return k * (k + 1) // 2


def svec(X: np.ndarray) -> np.ndarray:
    iu, ju, scale = svec_index(X.shape[0])
    return X[iu, ju] * scale


def smat(v: np.ndarray) -> np.ndarray:
    d = v.shape[0]
    k = int(round((np.sqrt(8 * d + 1) - 1) / 2))
    iu, ju, scale = svec_index(k)
    X = np.zeros((k, k))
    vals = v / scale
    X[iu, ju] = vals
    X[ju, iu] = vals
    return X


def sym_kron(P: np.ndarray) -> np.ndarray:
    """Matrix of the map svec(Y) -> svec(P Y P) for symmetric P."""
    k = P.shape[0]
    iu, ju, scale = svec_index(k)
    # column for basis element E_ab: P E_ab P has entries P_ia P_jb + P_ib P_ja
    Pi_a = P[iu][:, iu]
    Pj_b = P[ju][:, ju]
    Pi_b = P[iu][:, ju]
    Pj_a = P[ju][:, iu]
    K = Pi_a * Pj_b + Pi_b * Pj_a
    # basis svec^{-1}(e_ab) = (E_ab + E_ba)/scale_ab/... handled by the scales below
    K = K * scale[:, None] / scale[None, :]
    diag_cols = iu == ju
    K[:, diag_cols] *= 0.5
    return K


# block containers -------------------------------------------------------------


def _offsets(sig: Sequence[int]) -> np.ndarray:
    off = np.zeros(len(sig) + 1, dtype=np.int64)
    np.cumsum(np.asarray(sig, dtype=np.int64), out=off[1:])
    return off


@dataclass
class BlockVector:
    """A flat vector with a block signature."""

    data: np.ndarray
    signature: Tuple[int, ...]
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        self.signature = tuple(int(s) for s in self.signature)
        self.offsets = _offsets(self.signature)
        if self.data.shape != (int(self.offsets[-1]),):
            raise ValueError("data length does not match signature")

    @classmethod
    def zeros(cls, signature: Sequence[int]) -> "BlockVector":
        return cls(np.zeros(int(sum(signature))), tuple(signature))

    @classmethod
    def from_blocks(cls, blocks: Iterable[np.ndarray]) -> "BlockVector":
        blocks = [np.atleast_1d(np.asarray(b, dtype=float)) for b in blocks]
        data = np.concatenate(blocks) if blocks else np.zeros(0)
        return cls(data, tuple(b.size for b in blocks))

    def __len__(self) -> int:
        return len(self.signature)

    def block(self, i: int) -> np.ndarray:
        return self.data[self.offsets[i]:self.offsets[i + 1]]

    def set_block(self, i: int, value: np.ndarray) -> None:
        self.data[self.offsets[i]:self.offsets[i + 1]] = value

    def blocks(self) -> List[np.ndarray]:
        return [self.block(i) for i in range(len(self))]

    def copy(self) -> "BlockVector":
        return BlockVector(self.data.copy(), self.signature)

    def _check(self, other: "BlockVector") -> None:
        if self.signature != other.signature:
            raise ValueError("block signatures differ")

    def __add__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        return BlockVector(self.data + other.data, self.signature)

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        return BlockVector(self.data - other.data, self.signature)

    def __mul__(self, a: float) -> "BlockVector":
        return BlockVector(self.data * a, self.signature)

    __rmul__ = __mul__

    def dot(self, other: "BlockVector") -> float:
        self._check(other)
        return float(self.data @ other.data)


@dataclass
class BlockDiagMatrix:
    blocks: List[np.ndarray]

    def __post_init__(self) -> None:
        self.blocks = [np.asarray(b, dtype=float) for b in self.blocks]
        for b in self.blocks:
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ValueError("diagonal blocks must be square")
            scale = max(float(np.max(np.abs(b))) if b.size else 0.0, POLICY.abs_floor)
            if b.size and np.max(np.abs(b - b.T)) > 1e-12 * scale:
                raise ValueError("diagonal block is not symmetric")

    @property
    def signature(self) -> Tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    def matvec(self, v: BlockVector) -> BlockVector:
        if v.signature != self.signature:
            raise ValueError("block signatures differ")
        return BlockVector.from_blocks([B @ v.block(i) for i, B in enumerate(self.blocks)])

    def to_dense(self) -> np.ndarray:
        return sla.block_diag(*self.blocks) if self.blocks else np.zeros((0, 0))


@dataclass
class SparseBlockMatrix:
    """Block-sparse matrix; only nonzero dense blocks are kept."""

    row_sig: Tuple[int, ...]
    col_sig: Tuple[int, ...]
    blocks: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.row_sig = tuple(int(s) for s in self.row_sig)
        self.col_sig = tuple(int(s) for s in self.col_sig)
        self.row_off = _offsets(self.row_sig)
        self.col_off = _offsets(self.col_sig)
        clean = {}
        for (i, j), B in self.blocks.items():
            B = np.asarray(B, dtype=float)
            if B.shape != (self.row_sig[i], self.col_sig[j]):
                raise ValueError(f"block ({i},{j}) has shape {B.shape}")
            if np.any(B != 0):
                clean[(i, j)] = B
        self.blocks = clean

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.row_off[-1]), int(self.col_off[-1])

    @classmethod
    def from_dense(cls, M: np.ndarray, row_sig: Sequence[int], col_sig: Sequence[int]) -> "SparseBlockMatrix":
        ro, co = _offsets(row_sig), _offsets(col_sig)
        blocks = {}
        for i in range(len(row_sig)):
            for j in range(len(col_sig)):
                B = M[ro[i]:ro[i + 1], co[j]:co[j + 1]]
                if B.size and np.any(B != 0):
                    blocks[(i, j)] = B.copy()
        return cls(tuple(row_sig), tuple(col_sig), blocks)

    def to_dense(self) -> np.ndarray:
        M = np.zeros(self.shape)
        for (i, j), B in self.blocks.items():
            M[self.row_off[i]:self.row_off[i + 1], self.col_off[j]:self.col_off[j + 1]] = B
        return M

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix(self.to_dense())

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape[0])
        for (i, j), B in self.blocks.items():
            out[self.row_off[i]:self.row_off[i + 1]] += B @ v[self.col_off[j]:self.col_off[j + 1]]
        return out

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape[1])
        for (i, j), B in self.blocks.items():
            out[self.col_off[j]:self.col_off[j + 1]] += B.T @ v[self.row_off[i]:self.row_off[i + 1]]
        return out

    def get(self, i: int, j: int) -> np.ndarray:
        B = self.blocks.get((i, j))
        if B is None:
            return np.zeros((self.row_sig[i], self.col_sig[j]))
        return B
