"""Dense linear-algebra primitives used by the integrators.

Everything here works on real double-precision ``numpy`` arrays. The only
stateful object is :class:`OperatorHandle`, which memoizes ``expm(t*A)`` per
distinct ``t``; the cache is filled under a lock and never mutated afterwards,
so handles can be shared between concurrently running integrations.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DegenerateBasisError, DimensionError, NonFiniteInputError

ORTH_TOL = 1e-12
# Entries this far below the largest one cannot affect a double-precision
# product; zeroing them keeps stiff exponentials free of subnormals, which
# BLAS otherwise processes an order of magnitude slower.
EXPM_FLUSH = 1e-200


def orth(M: np.ndarray, tol: float = ORTH_TOL) -> np.ndarray:
    """Orthonormal basis of the numerical column span of ``M``.

    Householder QR with column pivoting; a column is dropped when its residual
    after projection onto the already accepted columns is below
    ``tol * ||M||_F``. Blocks with more columns than rows are accepted, the
    result then has at most ``M.shape[0]`` columns.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"orth expects a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteInputError("non-finite input")
    norm = np.linalg.norm(M)
    if norm == 0.0:
        raise DegenerateBasisError("degenerate basis")
    Q, R, _ = la.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    k = int(np.count_nonzero(diag > tol * norm))
    if k == 0:
        raise DegenerateBasisError("degenerate basis")
    return Q[:, :k]


def svd_full(M: np.ndarray):
    """Thin SVD ``M = U @ diag(sigma) @ V.T`` with ``sigma`` descending.

    Returns ``(U, sigma, V)``; note ``V`` is returned untransposed.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NonFiniteInputError("non-finite input")
    try:
        U, s, Vt = la.svd(M, full_matrices=False, lapack_driver="gesdd")
    except la.LinAlgError:
        U, s, Vt = la.svd(M, full_matrices=False, lapack_driver="gesvd")
    return U, s, Vt.T


def frob_distance(X: np.ndarray, Y: np.ndarray) -> float:
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise DimensionError(f"shape mismatch {X.shape} vs {Y.shape}")
    return float(np.linalg.norm(X - Y))


@dataclass(eq=False)
class OperatorHandle:
    """Time-independent square operator ``A = scale * data``.

    ``storage`` is ``"dense"`` (``data`` is m x m) or ``"tridiagonal"``
    (``data`` has shape (3, m): super-, main and sub-diagonal, the layout of
    :func:`scipy.linalg.solve_banded` with ``(1, 1)``).
    """

    data: np.ndarray
    storage: str = "dense"
    scale: float = 1.0
    symmetric: bool | None = None
    _expm_cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.storage == "dense":
            if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
                raise DimensionError(f"operator must be square, got {self.data.shape}")
        elif self.storage == "tridiagonal":
            if self.data.ndim != 2 or self.data.shape[0] != 3:
                raise DimensionError("tridiagonal storage expects shape (3, m)")
        else:
            raise ValueError(f"unknown storage {self.storage!r}")
        if self.symmetric is None:
            D = self.dense()
            self.symmetric = bool(np.array_equal(D, D.T))

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0 or not np.any(self.data)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.m)

    def dense(self) -> np.ndarray:
        if self.storage == "dense":
            return self.scale * self.data
        sup, main, sub = self.data
        D = np.diag(main) + np.diag(sup[1:], 1) + np.diag(sub[:-1], -1)
        return self.scale * D

    def matmul(self, M: np.ndarray) -> np.ndarray:
        """``A @ M`` without densifying banded storage."""
        if self.storage == "dense":
            return self.scale * (self.data @ M)
        sup, main, sub = self.data
        M = np.asarray(M, dtype=float)
        M2 = M.reshape(M.shape[0], -1)
        out = main[:, None] * M2
        out[:-1] += sup[1:, None] * M2[1:]
        out[1:] += sub[:-1, None] * M2[:-1]
        return self.scale * out.reshape(M.shape)

    def expm(self, t: float) -> np.ndarray:
        """Dense ``expm(t * A)``, computed once per distinct ``t``."""
        t = float(t)
        E = self._expm_cache.get(t)
        if E is not None:
            return E
        with self._lock:
            E = self._expm_cache.get(t)
            if E is None:
                E = la.expm(t * self.dense())
                E[np.abs(E) < EXPM_FLUSH * np.abs(E).max()] = 0.0
                E.setflags(write=False)
                self._expm_cache[t] = E
        return E


def as_operator(A) -> OperatorHandle:
    if isinstance(A, OperatorHandle):
        return A
    return OperatorHandle(np.asarray(A, dtype=float))


def expm_action(A, t: float, M: np.ndarray) -> np.ndarray:
    """``expm(t*A) @ M`` for a thin block ``M``.

    ``A`` may be an :class:`OperatorHandle` (exponential cached on the handle)
    or a plain square array.
    """
    A = as_operator(A)
    M = np.asarray(M, dtype=float)
    if M.shape[0] != A.m:
        raise DimensionError(f"operator is {A.m}x{A.m} but block has {M.shape[0]} rows")
    if t < 0:
        raise ValueError("expm_action needs t >= 0")
    if t == 0.0:
        return M.copy()
    return A.expm(t) @ M
