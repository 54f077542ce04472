"""Time steppers for ``X' = A X + X A^T + G(t, X)``.

The low-rank scheme composes exact half steps of the linear flow, applied
to the factors, with one midpoint BUG step for the nonlinear part::

    Y1 = phi_A(tau/2) o BUG2(G, tau) o phi_A(tau/2) (Y0)

All inner matrix ODEs (K-, L- and Galerkin steps) are advanced with the
explicit Heun method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, NonlinearityBlowup
from .linalg_core import as_operator, orth
from .lowrank import (
    LowRankFactor,
    TruncationMode,
    densify,
    svd_truncate,
)

RHS = Callable[[float, np.ndarray], np.ndarray]

MAX_STEPS = 10**8


@dataclass(frozen=True)
class SchemeConfig:
    tau: float
    truncation: TruncationMode
    inner_substeps: int = 1

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.inner_substeps < 1:
            raise ValueError("inner_substeps must be >= 1")


@dataclass
class BugWorkspace:
    """Intermediate quantities of one BUG / midpoint BUG step.

    Filled in place by :func:`bug_augmented_step` and
    :func:`bug2_midpoint_step` when a workspace is passed; used by tests and
    by the rank-history bookkeeping.
    """

    K: np.ndarray | None = None
    L: np.ndarray | None = None
    U_hat: np.ndarray | None = None
    V_hat: np.ndarray | None = None
    M_hat: np.ndarray | None = None
    N_hat: np.ndarray | None = None
    S_hat: np.ndarray | None = None
    U_bar: np.ndarray | None = None
    V_bar: np.ndarray | None = None
    M_bar: np.ndarray | None = None
    N_bar: np.ndarray | None = None
    S_bar: np.ndarray | None = None
    r_in: int = 0
    tail_norm: float = 0.0
    floored: bool = False
    half: "BugWorkspace | None" = field(default=None, repr=False)

    @property
    def r_hat(self) -> int:
        src = self.half if self.half is not None else self
        return 0 if src.U_hat is None else max(src.U_hat.shape[1], src.V_hat.shape[1])

    @property
    def r_bar(self) -> int:
        return 0 if self.U_bar is None else max(self.U_bar.shape[1], self.V_bar.shape[1])


def _check_finite(Y: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(Y)):
        raise NonlinearityBlowup(t)
    return Y


def heun_step(f: RHS, t0: float, tau: float, Y0: np.ndarray) -> np.ndarray:
    # overflow is reported as NonlinearityBlowup, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = _check_finite(f(t0, Y0), t0)
        k2 = _check_finite(f(t0 + tau, Y0 + tau * k1), t0 + tau)
        return _check_finite(Y0 + (0.5 * tau) * (k1 + k2), t0 + tau)


def heun_integrate(f: RHS, t0: float, tau: float, Y0: np.ndarray, substeps: int = 1) -> np.ndarray:
    h = tau / substeps
    Y = Y0
    for j in range(substeps):
        Y = heun_step(f, t0 + j * h, h, Y)
    return Y


def _augmented_bases(F: RHS, t0: float, tau: float, Y0: LowRankFactor, substeps: int):
    U0, S0, V0 = Y0.U, Y0.S, Y0.V

    def k_rhs(t, K):
        return F(t, K @ V0.T) @ V0

    def l_rhs(t, L):
        return F(t, U0 @ L.T).T @ U0

    K1 = heun_integrate(k_rhs, t0, tau, U0 @ S0, substeps)
    L1 = heun_integrate(l_rhs, t0, tau, V0 @ S0.T, substeps)
    return K1, L1


def _galerkin(F: RHS, t0: float, tau: float, U: np.ndarray, V: np.ndarray, S0: np.ndarray, substeps: int):
    def s_rhs(t, S):
        return U.T @ F(t, (U @ S) @ V.T) @ V

    return heun_integrate(s_rhs, t0, tau, S0, substeps)


def bug_augmented_step(
    F: RHS,
    t0: float,
    tau: float,
    Y0: LowRankFactor,
    cfg: SchemeConfig,
    workspace: BugWorkspace | None = None,
) -> LowRankFactor:
    """One augmented BUG step, returned untruncated at rank <= 2r."""
    ws = workspace if workspace is not None else BugWorkspace()
    substeps = cfg.inner_substeps
    U0, S0, V0 = Y0.U, Y0.S, Y0.V

    K1, L1 = _augmented_bases(F, t0, tau, Y0, substeps)
    U_hat = orth(np.hstack([U0, K1]))
    V_hat = orth(np.hstack([V0, L1]))
    M_hat = U_hat.T @ U0
    N_hat = V_hat.T @ V0
    S_hat = _galerkin(F, t0, tau, U_hat, V_hat, M_hat @ S0 @ N_hat.T, substeps)

    ws.K, ws.L = K1, L1
    ws.U_hat, ws.V_hat, ws.M_hat, ws.N_hat, ws.S_hat = U_hat, V_hat, M_hat, N_hat, S_hat
    ws.r_in = Y0.rank
    return _rectangular_core_factor(U_hat, S_hat, V_hat)


def _rectangular_core_factor(U: np.ndarray, S: np.ndarray, V: np.ndarray) -> LowRankFactor:
    """Factor from bases of possibly different widths.

    ``orth`` can drop a different number of columns on the two sides; the
    core is then rectangular and we square it up with a thin SVD.
    """
    if U.shape[1] == V.shape[1]:
        return LowRankFactor(U, S, V)
    u, s, vt = np.linalg.svd(S, full_matrices=False)
    return LowRankFactor(U @ u, np.diag(s), V @ vt.T)


def bug2_midpoint_step(
    F: RHS,
    t0: float,
    tau: float,
    Y0: LowRankFactor,
    cfg: SchemeConfig,
    workspace: BugWorkspace | None = None,
) -> LowRankFactor:
    """Second-order midpoint BUG step followed by SVD truncation."""
    ws = workspace if workspace is not None else BugWorkspace()
    substeps = cfg.inner_substeps
    U0, S0, V0 = Y0.U, Y0.S, Y0.V

    half_ws = BugWorkspace()
    Y_half = bug_augmented_step(F, t0, 0.5 * tau, Y0, cfg, half_ws)
    t_half = t0 + 0.5 * tau
    F_half = _check_finite(F(t_half, densify(Y_half)), t_half)

    U_bar = orth(np.hstack([Y_half.U, tau * (F_half @ Y_half.V)]))
    V_bar = orth(np.hstack([Y_half.V, tau * (F_half.T @ Y_half.U)]))
    M_bar = U_bar.T @ U0
    N_bar = V_bar.T @ V0
    S_bar = _galerkin(F, t0, tau, U_bar, V_bar, M_bar @ S0 @ N_bar.T, substeps)

    ws.half = half_ws
    ws.K, ws.L = half_ws.K, half_ws.L
    ws.U_hat, ws.V_hat = Y_half.U, Y_half.V
    ws.M_hat, ws.N_hat, ws.S_hat = half_ws.M_hat, half_ws.N_hat, Y_half.S
    ws.U_bar, ws.V_bar, ws.M_bar, ws.N_bar, ws.S_bar = U_bar, V_bar, M_bar, N_bar, S_bar
    ws.r_in = Y0.rank

    Y1, tail, floored = svd_truncate(_rectangular_core_factor(U_bar, S_bar, V_bar), cfg.truncation)
    ws.tail_norm, ws.floored = tail, floored
    return Y1


def phi_A_flow(A, t: float, Y: LowRankFactor) -> LowRankFactor:
    """Exact linear flow ``expm(tA) Y expm(tA)^T`` applied to the factors."""
    A = as_operator(A)
    if A.m != Y.m:
        raise DimensionError(f"operator is {A.m}x{A.m}, factor is {Y.shape}")
    if t == 0.0 or A.is_zero:
        return Y
    E = A.expm(t)
    Qu, Ru = np.linalg.qr(E @ Y.U)
    Qv, Rv = np.linalg.qr(E @ Y.V)
    return LowRankFactor(Qu, Ru @ Y.S @ Rv.T, Qv)


def _sandwich(A, t: float, X: np.ndarray) -> np.ndarray:
    A = as_operator(A)
    if t == 0.0 or A.is_zero:
        return X
    E = A.expm(t)
    return E @ X @ E.T


def strang_lowrank_step(
    problem,
    t0: float,
    Y0: LowRankFactor,
    cfg: SchemeConfig,
    workspace: BugWorkspace | None = None,
) -> LowRankFactor:
    half = 0.5 * cfg.tau
    Y = phi_A_flow(problem.A, half, Y0)
    Y = bug2_midpoint_step(problem.G, t0, cfg.tau, Y, cfg, workspace)
    return phi_A_flow(problem.A, half, Y)


def strang_fullrank_step(problem, t0: float, X0: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    half = 0.5 * cfg.tau
    X = _sandwich(problem.A, half, X0)
    X = heun_integrate(problem.G, t0, cfg.tau, X, cfg.inner_substeps)
    return _sandwich(problem.A, half, X)


def full_rhs(problem) -> RHS:
    """``F(t, Y) = A Y + Y A^T + G(t, Y)`` as a single dense right-hand side."""
    A = as_operator(problem.A)

    def F(t, Y):
        AY = A.matmul(Y)
        return AY + A.matmul(Y.T).T + problem.G(t, Y)

    return F


def bug2_only_step(
    problem,
    t0: float,
    Y0: LowRankFactor,
    cfg: SchemeConfig,
    workspace: BugWorkspace | None = None,
) -> LowRankFactor:
    """Midpoint BUG on the unsplit right-hand side (no exponential flows)."""
    return bug2_midpoint_step(full_rhs(problem), t0, cfg.tau, Y0, cfg, workspace)


def _fullrank_fused(problem, grid, X, cfg: SchemeConfig) -> np.ndarray:
    """Dense Strang steps with adjacent half-step sandwiches merged.

    ``phi_A(h/2) o phi_A(h/2) = phi_A(h)`` between consecutive steps, so a run
    of n steps needs n + 1 sandwiches instead of 2n.
    """
    A = problem.A
    X = _sandwich(A, 0.5 * grid[0][1], X)
    for k, (tk, h) in enumerate(grid):
        X = heun_integrate(problem.G, tk, h, X, cfg.inner_substeps)
        if k + 1 < len(grid):
            h_next = grid[k + 1][1]
            if h_next == h:
                X = _sandwich(A, h, X)
            else:
                X = _sandwich(A, 0.5 * h_next, _sandwich(A, 0.5 * h, X))
        else:
            X = _sandwich(A, 0.5 * h, X)
    return X


SCHEMES = ("lowrank_strang", "fullrank_strang", "bug2_only")


@dataclass
class StepRecord:
    t: float
    rank: int
    tail_norm: float
    floored: bool = False
    r_hat: int = 0
    r_bar: int = 0


@dataclass
class IntegrationResult:
    state: object
    t: float
    n_steps: int
    history: list[StepRecord] | None = None
    states: list | None = None


def step_times(t0: float, T: float, tau: float) -> list[tuple[float, float]]:
    """``(t_k, step)`` pairs covering ``[t0, T]``.

    When ``(T - t0)/tau`` is within a relative 1e-9 of an integer the grid is
    uniform; otherwise a final shortened step lands exactly on ``T``.
    """
    span = T - t0
    if span < 0:
        raise ValueError("T must not precede t0")
    if span == 0:
        return []
    ratio = span / tau
    n = round(ratio)
    if n >= 1 and abs(ratio - n) <= 1e-9 * max(1.0, ratio):
        if n > MAX_STEPS:
            raise OverflowError(f"{n} steps exceed the limit {MAX_STEPS}")
        return [(t0 + k * tau, tau) for k in range(n)]
    n = math.floor(ratio)
    if n + 1 > MAX_STEPS:
        raise OverflowError(f"{n + 1} steps exceed the limit {MAX_STEPS}")
    steps = [(t0 + k * tau, tau) for k in range(n)]
    last = t0 + n * tau
    steps.append((last, T - last))
    return steps


def integrate(
    problem,
    scheme: str,
    cfg: SchemeConfig,
    initial=None,
    T: float | None = None,
    record_history: bool = False,
    record_states: bool = False,
    callback: Callable[[int, float, object], None] | None = None,
) -> IntegrationResult:
    """Advance ``problem`` from ``problem.t0`` to ``T`` (default ``problem.T``).

    ``initial`` overrides the starting state: a :class:`LowRankFactor` for the
    low-rank schemes, a dense matrix for ``fullrank_strang``. By default the
    low-rank schemes start from ``problem.initial_factor(r)`` and the dense
    scheme from ``problem.X0_dense``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    T = problem.T if T is None else T
    t0 = problem.t0

    if initial is None:
        if scheme == "fullrank_strang":
            state = problem.dense_initial()
        else:
            r = cfg.truncation.r_target if cfg.truncation.kind == "fixed" else problem.X0_lowrank.rank
            state = problem.initial_factor(r)[0]
    else:
        state = initial

    history = [] if record_history else None
    states = [state] if record_states else None
    lowrank_step = strang_lowrank_step if scheme == "lowrank_strang" else bug2_only_step

    grid = step_times(t0, T, cfg.tau)
    if scheme == "fullrank_strang" and states is None and callback is None and grid:
        state = _fullrank_fused(problem, grid, state, cfg)
        return IntegrationResult(state, grid[-1][0] + grid[-1][1], len(grid), history, states)

    for k, (tk, h) in enumerate(grid):
        step_cfg = cfg if h == cfg.tau else SchemeConfig(h, cfg.truncation, cfg.inner_substeps)
        if scheme == "fullrank_strang":
            state = strang_fullrank_step(problem, tk, state, step_cfg)
        else:
            ws = BugWorkspace()
            state = lowrank_step(problem, tk, state, step_cfg, ws)
            if history is not None:
                history.append(StepRecord(tk + h, state.rank, ws.tail_norm, ws.floored, ws.r_hat, ws.r_bar))
        if states is not None:
            states.append(state)
        if callback is not None:
            callback(k + 1, tk + h, state)

    t_end = grid[-1][0] + grid[-1][1] if grid else t0
    return IntegrationResult(state, t_end, len(grid), history, states)
