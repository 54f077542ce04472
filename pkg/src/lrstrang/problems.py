"""Benchmark problems and operator ingestion.

Each constructor returns a :class:`ProblemSpec` for
``X' = A X + X A^T + G(t, X)`` on a tensor grid of ``m`` interior points
per direction with homogeneous Dirichlet boundaries.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, MatrixMarketError
from .linalg_core import OperatorHandle
from .lowrank import (
    LowRankFactor,
    TruncationMode,
    densify,
    factored_sum,
    initial_factor,
    svd_truncate,
)
from .mmio import read_mtx, write_mtx


@dataclass(frozen=True)
class GridSpec:
    m: int
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("grid needs hi > lo")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.m + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.h * np.arange(1, self.m + 1)


@dataclass(frozen=True)
class Nonlinearity:
    """Evaluator ``G(t, Y) -> dense matrix`` plus structural flags.

    ``factor`` holds a low-rank representation of a constant source.
    """

    func: Callable[[float, np.ndarray], np.ndarray]
    constant: bool = False
    symmetric: bool = False
    factor: LowRankFactor | None = None

    def __call__(self, t: float, Y: np.ndarray) -> np.ndarray:
        return self.func(t, Y)


def constant_source(C: np.ndarray, factor: LowRankFactor | None = None) -> Nonlinearity:
    C = np.array(C, dtype=float)
    C.setflags(write=False)
    return Nonlinearity(
        lambda t, Y: C,
        constant=True,
        symmetric=bool(np.array_equal(C, C.T)),
        factor=factor,
    )


def zero_source(m: int) -> Nonlinearity:
    return constant_source(np.zeros((m, m)))


@dataclass(frozen=True)
class ProblemSpec:
    A: OperatorHandle
    G: Nonlinearity
    X0_lowrank: LowRankFactor
    t0: float = 0.0
    T: float = 0.3
    label: str = ""
    X0_dense: np.ndarray | None = None
    params: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.X0_lowrank.m != self.A.m:
            raise DimensionError("initial factor and operator sizes differ")
        if not self.T > self.t0:
            raise ValueError("T must exceed t0")

    @property
    def m(self) -> int:
        return self.A.m

    def dense_initial(self) -> np.ndarray:
        if self.X0_dense is not None:
            return np.array(self.X0_dense, dtype=float)
        return densify(self.X0_lowrank)

    def initial_factor(self, r: int, seed: int = 0) -> tuple[LowRankFactor, float]:
        """Rank-``r`` start value and ``delta = ||X0 - Y0||_F``."""
        Y0, delta = initial_factor(self.X0_lowrank, r, seed)
        if self.X0_dense is not None:
            delta = float(np.linalg.norm(densify(Y0) - self.X0_dense))
        return Y0, delta

    def with_source(self, G: Nonlinearity, label: str | None = None) -> "ProblemSpec":
        return dataclasses.replace(self, G=G, label=self.label if label is None else label)

    def compatibility_proxy(self, t: float = 0.0) -> float:
        """``||A G + G A^T||_F / ||G||_F`` evaluated at the initial state.

        Bounded under mesh refinement for sources compatible with the
        boundary conditions; grows with ``m`` otherwise.
        """
        Gx = self.G(t, self.dense_initial())
        AG = self.A.matmul(Gx)
        GAt = self.A.matmul(Gx.T).T
        return float(np.linalg.norm(AG + GAt) / np.linalg.norm(Gx))


def build_laplacian_1d(grid: GridSpec, scale: float = 1.0) -> OperatorHandle:
    """Second-order central difference Laplacian, Dirichlet rows dropped."""
    m = grid.m
    if m < 2:
        raise DimensionError("laplacian needs m >= 2")
    inv_h2 = 1.0 / grid.h**2
    bands = np.empty((3, m))
    bands[0] = inv_h2
    bands[1] = -2.0 * inv_h2
    bands[2] = inv_h2
    return OperatorHandle(bands, storage="tridiagonal", scale=scale, symmetric=True)


def _rank1(u: np.ndarray, v: np.ndarray, c: float = 1.0) -> LowRankFactor:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    return LowRankFactor((u / nu)[:, None], np.array([[c * nu * nv]]), (v / nv)[:, None])


def _sum_of_rank1(terms: Sequence[LowRankFactor], machine_tail: float = 1e-15) -> LowRankFactor:
    """Factored sum of rank-one terms, rounded at a relative machine tail."""
    acc = terms[0]
    for term in terms[1:]:
        acc = factored_sum(acc, term)
    sigma_max = np.linalg.norm(acc.S, 2)
    theta = machine_tail * sigma_max * acc.rank
    Y, _, _ = svd_truncate(acc, TruncationMode.adaptive(theta))
    return Y


HEAT_SOURCE_COEFFS = tuple(1.0 if k == 1 else 0.0 for k in range(1, 21))


def heat_source_problem(
    m: int = 128,
    T: float = 0.3,
    source_coeffs: Sequence[float] = HEAT_SOURCE_COEFFS,
) -> ProblemSpec:
    """Heat equation with a smooth separable source on ``[-pi, pi]^2``.

    ``u0 = sum_{k=1}^{10} 10^{-(k-1)} exp(-k (x^2 + y^2))`` and
    ``g = sum_k c_k sin(kx) sin(ky)``; the default coefficients keep only
    ``k = 1``. Pass another ``source_coeffs`` to try decaying sequences.
    """
    grid = GridSpec(m, -np.pi, np.pi)
    x = grid.nodes
    A = build_laplacian_1d(grid)

    X0 = _sum_of_rank1([_rank1(np.exp(-k * x**2), np.exp(-k * x**2), 10.0 ** (-(k - 1))) for k in range(1, 11)])
    X0_dense = sum(10.0 ** (-(k - 1)) * np.outer(np.exp(-k * x**2), np.exp(-k * x**2)) for k in range(1, 11))

    terms = [_rank1(np.sin(k * x), np.sin(k * x), c) for k, c in enumerate(source_coeffs, start=1) if c != 0.0]
    if terms:
        G_factor = _sum_of_rank1(terms)
        G_dense = sum(c * np.outer(np.sin(k * x), np.sin(k * x)) for k, c in enumerate(source_coeffs, start=1) if c != 0.0)
        G = constant_source(0.5 * (G_dense + G_dense.T), G_factor)
    else:
        G = zero_source(m)

    return ProblemSpec(
        A, G, X0, 0.0, T, "heat", X0_dense,
        params={"m": m, "T": T, "source_coeffs": list(map(float, source_coeffs))},
    )


def _random_spsd(rng: np.random.Generator, m: int, rank: int, distribution: str) -> tuple[LowRankFactor, np.ndarray]:
    if distribution == "uniform":
        Z = rng.random((m, rank))
    elif distribution == "normal":
        Z = rng.standard_normal((m, rank))
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    U, s, _ = np.linalg.svd(Z, full_matrices=False)
    d = s**2
    d /= np.linalg.norm(d)  # ||Z Z^T||_F = ||s^2||_2
    factor = LowRankFactor(U, np.diag(d), U)
    dense = (U * d) @ U.T
    return factor, 0.5 * (dense + dense.T)


def lyapunov_random_problem(
    m: int = 128,
    seed: int = 0,
    T: float = 0.3,
    domain: tuple[float, float] = (0.0, 1.0),
    distribution: str = "uniform",
) -> ProblemSpec:
    """Differential Lyapunov equation with random SPSD data.

    ``X0`` has rank 10 and the constant forcing ``Q`` rank 5, both scaled to
    unit Frobenius norm; ``A`` is the Dirichlet Laplacian on ``domain``.
    ``distribution`` picks the factor entries: ``"uniform"`` on [0, 1) or
    ``"normal"``.
    """
    if m < 16:
        raise DimensionError("lyap-random needs m >= 16")
    rng = np.random.default_rng(seed)
    X0, X0_dense = _random_spsd(rng, m, 10, distribution)
    Q_factor, Q = _random_spsd(rng, m, 5, distribution)
    A = build_laplacian_1d(GridSpec(m, *domain))
    return ProblemSpec(
        A, constant_source(Q, Q_factor), X0, 0.0, T, "lyap-random", X0_dense,
        params={
            "m": m, "T": T, "seed": seed, "domain": list(domain),
            "distribution": distribution, "normalization": "unit-frobenius",
        },
    )


def _hadamard_cube(t: float, U: np.ndarray) -> np.ndarray:
    return U * U * U


def cubic_problem(m: int = 128, alpha: float = 1 / 50, T: float = 0.3) -> ProblemSpec:
    """``U' = alpha (A U + U A^T) + U**3`` on ``[0, 1]^2``.

    The diffusion coefficient is folded into the operator handle.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    grid = GridSpec(m, 0.0, 1.0)
    x = grid.nodes
    u = 4.0 * x * (1.0 - x)
    A = build_laplacian_1d(grid, scale=alpha)
    G = Nonlinearity(_hadamard_cube, constant=False, symmetric=True)
    return ProblemSpec(
        A, G, _rank1(u, u), 0.0, T, "cubic", np.outer(u, u),
        params={"m": m, "T": T, "alpha": alpha},
    )


PROBLEMS = {
    "heat": heat_source_problem,
    "lyap-random": lyapunov_random_problem,
    "cubic": cubic_problem,
}


def make_problem(label: str, m: int = 128, T: float = 0.3, seed: int = 0, **kwargs) -> ProblemSpec:
    if label == "heat":
        return heat_source_problem(m, T, **kwargs)
    if label == "lyap-random":
        return lyapunov_random_problem(m, seed, T, **kwargs)
    if label == "cubic":
        return cubic_problem(m, T=T, **kwargs)
    raise KeyError(f"unknown problem {label!r}; choose from {sorted(PROBLEMS)}")


def load_operator(path) -> OperatorHandle:
    M = read_mtx(path)
    if M.shape[0] != M.shape[1]:
        raise MatrixMarketError(f"operator must be square, got {M.shape[0]}x{M.shape[1]}", path)
    return OperatorHandle(M, storage="dense")


def save_operator(A: OperatorHandle, path) -> None:
    write_mtx(path, A.dense())
