"""Factored low-rank matrices ``Y = U @ S @ V.T`` and their algebra.

``U`` and ``V`` carry orthonormal columns, ``S`` is a general (not
necessarily diagonal) square core. Factors are treated as immutable: every
operation returns a new :class:`LowRankFactor`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DimensionError
from .linalg_core import orth, svd_full
from .mmio import read_mtx, write_mtx

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class LowRankFactor:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U, S, V = (np.asarray(a, dtype=float) for a in (self.U, self.S, self.V))
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "V", V)
        if U.ndim != 2 or V.ndim != 2 or S.ndim != 2:
            raise DimensionError("U, S, V must be matrices")
        r = U.shape[1]
        if S.shape != (r, r) or V.shape[1] != r:
            raise DimensionError(f"inconsistent factor shapes U{U.shape} S{S.shape} V{V.shape}")
        if U.shape[0] != V.shape[0]:
            raise DimensionError("only square matrices are factored here")
        if not 1 <= r <= U.shape[0]:
            raise DimensionError(f"rank {r} outside [1, {U.shape[0]}]")

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])

    def orthonormality_defect(self) -> float:
        eye = np.eye(self.rank)
        return max(
            float(np.linalg.norm(self.U.T @ self.U - eye)),
            float(np.linalg.norm(self.V.T @ self.V - eye)),
        )

    def validate(self, tol: float = ORTHO_TOL) -> "LowRankFactor":
        """Raise if the bases are not orthonormal to ``tol``; return self."""
        defect = self.orthonormality_defect()
        if not defect <= tol:
            raise ValueError(f"factor bases not orthonormal (defect {defect:.3e})")
        if not np.all(np.isfinite(self.S)):
            raise ValueError("non-finite core")
        return self

    def norm(self) -> float:
        return float(np.linalg.norm(self.S))

    def transpose(self) -> "LowRankFactor":
        return LowRankFactor(self.V, self.S.T, self.U)

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.S, compute_uv=False)


def densify(Y: LowRankFactor) -> np.ndarray:
    return (Y.U @ Y.S) @ Y.V.T


@dataclass(frozen=True)
class TruncationMode:
    """Fixed target rank or absolute tail threshold ``theta``."""

    kind: str = "fixed"
    r_target: int | None = None
    theta: float | None = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.r_target is None or self.r_target < 1:
                raise ValueError("fixed truncation needs r_target >= 1")
        elif self.kind == "adaptive":
            if self.theta is None or not self.theta >= 0:
                raise ValueError("adaptive truncation needs theta >= 0")
        else:
            raise ValueError(f"unknown truncation kind {self.kind!r}")

    @classmethod
    def fixed(cls, r: int) -> "TruncationMode":
        return cls("fixed", r_target=int(r))

    @classmethod
    def adaptive(cls, theta: float) -> "TruncationMode":
        return cls("adaptive", theta=float(theta))

    def label(self) -> str:
        if self.kind == "fixed":
            return str(self.r_target)
        return f"theta={self.theta:g}"


class Truncation(NamedTuple):
    factor: LowRankFactor
    tail_norm: float
    floored: bool


def _tail_norms(sigma: np.ndarray) -> np.ndarray:
    """``tails[k]`` is the norm of ``sigma[k:]``; computed from the small end."""
    sq = sigma[::-1] ** 2
    tails = np.sqrt(np.cumsum(sq))[::-1]
    return np.append(tails, 0.0)


def select_rank(sigma: np.ndarray, mode: TruncationMode) -> tuple[int, bool]:
    """Number of singular values kept under ``mode`` and the rank-1 floor flag."""
    n = len(sigma)
    if mode.kind == "fixed":
        return min(mode.r_target, n), False
    tails = _tail_norms(sigma)
    ok = np.nonzero(tails <= mode.theta)[0]
    r1 = int(ok[0])
    if r1 == 0:
        return 1, True
    return r1, False


def svd_truncate(Y: LowRankFactor, mode: TruncationMode) -> Truncation:
    """Diagonalize the core and drop trailing singular directions.

    Only the small core is decomposed. Returns ``(factor, tail_norm, floored)``
    where ``floored`` marks an adaptive truncation that would have removed
    everything and was held at rank one instead.
    """
    u, s, v = svd_full(Y.S)
    r1, floored = select_rank(s, mode)
    tail = float(np.sqrt(np.sum(s[r1:] ** 2)))
    out = LowRankFactor(Y.U @ u[:, :r1], np.diag(s[:r1]), Y.V @ v[:, :r1])
    return Truncation(out, tail, floored)


def factored_sum(Y1: LowRankFactor, Y2: LowRankFactor) -> LowRankFactor:
    if Y1.shape != Y2.shape:
        raise DimensionError(f"shape mismatch {Y1.shape} vs {Y2.shape}")
    Us = np.hstack([Y1.U, Y2.U])
    Vs = np.hstack([Y1.V, Y2.V])
    Qu = orth(Us)
    Qv = orth(Vs)
    r1, r2 = Y1.rank, Y2.rank
    S = np.zeros((r1 + r2, r1 + r2))
    S[:r1, :r1] = Y1.S
    S[r1:, r1:] = Y2.S
    core = (Qu.T @ Us) @ S @ (Vs.T @ Qv)
    # orth may return bases of different sizes; square up by SVD of the core
    if Qu.shape[1] != Qv.shape[1]:
        u, s, v = svd_full(core)
        k = len(s)
        return LowRankFactor(Qu @ u[:, :k], np.diag(s), Qv @ v[:, :k])
    return LowRankFactor(Qu, core, Qv)


def factored_distance(Y1: LowRankFactor, X) -> float:
    """``||densify(Y1) - X||_F`` for a dense matrix or another factor.

    For two factors the difference is written over the stacked bases and
    reduced with two thin QR factorizations, so no m x m matrix is formed and
    no squared norms (with their cancellation) are involved.
    """
    if isinstance(X, LowRankFactor):
        if X.shape != Y1.shape:
            raise DimensionError(f"shape mismatch {Y1.shape} vs {X.shape}")
        _, Ru = np.linalg.qr(np.hstack([Y1.U, X.U]))
        _, Rv = np.linalg.qr(np.hstack([Y1.V, X.V]))
        r1 = Y1.rank
        k = r1 + X.rank
        D = np.zeros((k, k))
        D[:r1, :r1] = Y1.S
        D[r1:, r1:] = -X.S
        return float(np.linalg.norm(Ru @ D @ Rv.T))
    X = np.asarray(X, dtype=float)
    if X.shape != Y1.shape:
        raise DimensionError(f"shape mismatch {Y1.shape} vs {X.shape}")
    return float(np.linalg.norm(densify(Y1) - X))


def state_distance(a, b) -> float:
    """Frobenius distance between two states, each dense or factored."""
    if isinstance(a, LowRankFactor):
        return factored_distance(a, b)
    if isinstance(b, LowRankFactor):
        return factored_distance(b, a)
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def from_dense(X: np.ndarray, mode: TruncationMode) -> Truncation:
    U, s, V = svd_full(X)
    r1, floored = select_rank(s, mode)
    tail = float(np.sqrt(np.sum(s[r1:] ** 2)))
    return Truncation(LowRankFactor(U[:, :r1], np.diag(s[:r1]), V[:, :r1]), tail, floored)


def _complement(B: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m, r = B.shape
    G = rng.standard_normal((m, k))
    for _ in range(2):
        G -= B @ (B.T @ G)
    Q, _ = np.linalg.qr(G)
    Q -= B @ (B.T @ Q)
    Q, _ = np.linalg.qr(Q)
    return Q


def pad_factor(Y: LowRankFactor, r: int, seed: int = 0) -> LowRankFactor:
    """Extend ``Y`` to rank ``r`` with zero singular directions.

    The extra basis columns are seeded random orthonormal complements; the
    same draw is used for ``U`` and ``V`` so a symmetric factor stays
    symmetric. ``densify`` is unchanged.
    """
    k = r - Y.rank
    if k <= 0:
        return Y
    if r > Y.m:
        raise DimensionError(f"cannot pad to rank {r} > m = {Y.m}")
    Pu = _complement(Y.U, k, np.random.default_rng(seed))
    if Y.V is Y.U or np.array_equal(Y.V, Y.U):
        Pv = Pu
    else:
        Pv = _complement(Y.V, k, np.random.default_rng(seed))
    S = np.zeros((r, r))
    S[: Y.rank, : Y.rank] = Y.S
    return LowRankFactor(np.hstack([Y.U, Pu]), S, np.hstack([Y.V, Pv]))


def initial_factor(X0: LowRankFactor, r: int, seed: int = 0) -> tuple[LowRankFactor, float]:
    """Rank-``r`` starting value for an integration and its truncation error.

    Truncates when ``X0`` has higher rank, pads with zero directions when it
    has lower rank. The second value is ``||X0 - Y0||_F``.
    """
    if X0.rank > r:
        Y0, delta, _ = svd_truncate(X0, TruncationMode.fixed(r))
        return Y0, delta
    return pad_factor(X0, r, seed), 0.0


def save_factor(Y: LowRankFactor, directory) -> Path:
    """Write ``U.mtx``, ``S.mtx``, ``V.mtx`` and ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_mtx(d / "U.mtx", Y.U)
    write_mtx(d / "S.mtx", Y.S)
    write_mtx(d / "V.mtx", Y.V)
    manifest = {"m": Y.m, "r": Y.rank, "field": "real"}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_factor(directory) -> LowRankFactor:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    Y = LowRankFactor(read_mtx(d / "U.mtx"), read_mtx(d / "S.mtx"), read_mtx(d / "V.mtx"))
    if (Y.m, Y.rank) != (manifest["m"], manifest["r"]):
        raise DimensionError(f"{d}: manifest says m={manifest['m']}, r={manifest['r']}")
    return Y
