"""Experiment drivers behind the CLI subcommands."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import NonlinearityBlowup
from ..integrators import SchemeConfig, integrate
from ..lowrank import LowRankFactor, TruncationMode, factored_distance
from ..problems import ProblemSpec, make_problem
from .reference import DEFAULT_TAU_REF, Reference, reference_solution
from .report import ConvergenceReport, RankHistory, RankRecord, SweepRow
from .runge import chain_orders

log = logging.getLogger(__name__)


def resolve_problem(problem, m: int = 128, T: float = 0.3, seed: int = 0, **kwargs) -> ProblemSpec:
    if isinstance(problem, ProblemSpec):
        return problem
    return make_problem(problem, m=m, T=T, seed=seed, **kwargs)


def _error(state, ref: np.ndarray) -> float:
    if isinstance(state, LowRankFactor):
        return factored_distance(state, ref)
    return float(np.linalg.norm(state - ref))


def _run_cell(problem: ProblemSpec, tau: float, mode: TruncationMode, r_init: int | None, inner_substeps: int):
    cfg = SchemeConfig(tau, mode, inner_substeps)
    r0 = mode.r_target if mode.kind == "fixed" else (r_init or problem.X0_lowrank.rank)
    Y0, _ = problem.initial_factor(r0)
    t = time.perf_counter()
    try:
        res = integrate(problem, "lowrank_strang", cfg, initial=Y0)
    except NonlinearityBlowup as exc:
        log.warning("cell tau=%g %s diverged at t=%g", tau, mode.label(), exc.t)
        return None, (time.perf_counter() - t) * 1e3
    return res.state, (time.perf_counter() - t) * 1e3


def convergence_sweep(
    problem,
    taus: Sequence[float],
    ranks: Sequence[int] = (),
    thetas: Sequence[float] = (),
    reference: str | Reference = "dense-strang-fine",
    out_dir=None,
    *,
    m: int = 128,
    T: float = 0.3,
    seed: int = 0,
    tau_ref: float = DEFAULT_TAU_REF,
    checkpoint_dir=None,
    inner_substeps: int = 1,
    r_init: int | None = None,
    workers: int = 1,
    include_timing: bool = False,
) -> ConvergenceReport:
    """Final-time errors of the low-rank Strang scheme over a (tau, rank) grid.

    ``reference`` is a reference policy name or a precomputed
    :class:`Reference`. Each rank (or adaptive ``theta``) forms one column;
    Runge estimates are computed along every halving triple of ``taus``.
    Diverged cells are recorded with status ``"diverged"``.
    """
    problem = resolve_problem(problem, m, T, seed)
    taus = sorted((float(t) for t in taus), reverse=True)
    modes = [TruncationMode.fixed(r) for r in ranks] + [TruncationMode.adaptive(th) for th in thetas]
    if not taus or not modes:
        raise ValueError("need at least one tau and one rank or theta")

    if not isinstance(reference, Reference):
        reference = reference_solution(problem, reference, tau_ref, checkpoint_dir, inner_substeps)
    ref = reference.state
    ref_norm = float(np.linalg.norm(ref))

    cells = [(mode, tau) for mode in modes for tau in taus]

    def job(cell):
        mode, tau = cell
        return _run_cell(problem, tau, mode, r_init, inner_substeps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, cells))
    else:
        results = [job(c) for c in cells]

    rows: list[SweepRow] = []
    orders: list[tuple[str, float, float | None]] = []
    states: dict[tuple[str, float], object] = {}
    for (mode, tau), (state, ms) in zip(cells, results):
        states[mode.label(), tau] = state
        if state is None:
            rows.append(SweepRow(tau, mode.label(), None, None, None, ms, "diverged"))
            continue
        err = _error(state, ref)
        rel = err / ref_norm if ref_norm > 0 else None
        rows.append(SweepRow(tau, mode.label(), err, rel, None, ms, "ok", state.rank))

    for mode in modes:
        label = mode.label()
        est = chain_orders(taus, [states[label, t] for t in taus])
        by_tau = dict(est)
        for row in rows:
            if row.rank_mode == label and row.tau in by_tau:
                row.order = by_tau[row.tau]
        orders.extend((label, t, p) for t, p in est)

    deltas = {}
    for mode in modes:
        if mode.kind == "fixed":
            deltas[mode.label()] = problem.initial_factor(mode.r_target)[1]
    report = ConvergenceReport(
        problem.label,
        rows,
        orders,
        diagnostics={"initial_truncation_error": deltas, "reference": reference.describe()},
        metadata={
            "m": problem.m,
            "T": problem.T,
            "seed": problem.params.get("seed", seed),
            "inner_substeps": inner_substeps,
            "tau_ref": reference.tau_ref,
            "scheme": "lowrank_strang",
            "params": problem.params,
        },
    )
    if out_dir is not None:
        out = Path(out_dir)
        report.write_csv(out / "convergence.csv", include_timing)
        (out / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True, default=float) + "\n")
    return report


def singular_values_of(state, k: int) -> np.ndarray:
    if isinstance(state, LowRankFactor):
        s = state.singular_values()
        s = np.concatenate([s, np.zeros(max(0, k - len(s)))])
    else:
        s = np.linalg.svd(state, compute_uv=False)
    return s[:k]


def singular_value_dump(
    problem,
    scheme: str = "fullrank_strang",
    tau: float = DEFAULT_TAU_REF,
    T: float | None = None,
    k: int = 10,
    out_path=None,
    *,
    m: int = 128,
    seed: int = 0,
    rank: int | None = None,
    inner_substeps: int = 1,
    state=None,
) -> np.ndarray:
    """Leading ``k`` singular values of the state at ``T``.

    ``state`` skips the integration (e.g. to reuse a reference).
    """
    problem = resolve_problem(problem, m, 0.3 if T is None else T, seed)
    if k > problem.m:
        raise ValueError(f"k={k} exceeds m={problem.m}")
    if state is None:
        mode = TruncationMode.fixed(rank or problem.X0_lowrank.rank)
        state = integrate(problem, scheme, SchemeConfig(tau, mode, inner_substeps), T=T).state
    sigma = singular_values_of(state, k)
    if out_path is not None:
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("index", "sigma"))
            for i, s in enumerate(sigma, start=1):
                w.writerow((i, repr(float(s))))
    return sigma


def adaptive_rank_run(
    problem,
    tau: float = 0.005,
    theta: float = 1e-8,
    r_init: int = 3,
    T: float | None = None,
    out_path=None,
    *,
    m: int = 128,
    seed: int = 0,
    inner_substeps: int = 1,
) -> RankHistory:
    """Rank-adaptive low-rank Strang run, recording rank and tail per step."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if r_init < 1:
        raise ValueError("r_init must be >= 1")
    problem = resolve_problem(problem, m, 0.3 if T is None else T, seed)
    Y0, _ = problem.initial_factor(r_init)
    cfg = SchemeConfig(tau, TruncationMode.adaptive(theta), inner_substeps)
    res = integrate(problem, "lowrank_strang", cfg, initial=Y0, T=T, record_history=True)
    records = [
        RankRecord(i + 1, h.t, h.rank, h.tail_norm, h.floored) for i, h in enumerate(res.history)
    ]
    history = RankHistory(records, res.state)
    if out_path is not None:
        history.write_csv(out_path)
    return history
