import csv
import json
import logging
import math

import numpy as np
import pytest
import scipy.linalg as la

from lrstrang.errors import OrderUndefinedError
from lrstrang.harness import reference as reference_mod
from lrstrang.harness.experiments import adaptive_rank_run, convergence_sweep, singular_value_dump
from lrstrang.harness.reference import Reference, reference_digest, reference_solution
from lrstrang.harness.report import CSV_COLUMNS
from lrstrang.harness.runge import chain_orders, order_from_differences, runge_order_estimate
from lrstrang.linalg_core import OperatorHandle
from lrstrang.lowrank import LowRankFactor, densify
from lrstrang.problems import (
    GridSpec,
    Nonlinearity,
    ProblemSpec,
    build_laplacian_1d,
    make_problem,
    zero_source,
)

from .oracles import lyapunov_closed_form, random_orthonormal


class TestRunge:
    def test_exact_ratios(self):
        u = 3.7e-6
        assert order_from_differences(8 * u, 2 * u) == 2.0
        assert order_from_differences(2 * u, u) == 1.0

    def test_underflow(self):
        with pytest.raises(OrderUndefinedError):
            order_from_differences(1e-14, 1e-16)
        with pytest.raises(OrderUndefinedError):
            order_from_differences(1.0, math.nan)

    def test_from_solutions(self, rng):
        X = rng.standard_normal((5, 5))
        D = rng.standard_normal((5, 5))
        D /= np.linalg.norm(D)
        # X + c tau^2 D at tau, tau/2, tau/4
        sols = [X + 4.0 * D, X + 1.0 * D, X + 0.25 * D]
        assert runge_order_estimate(*sols) == pytest.approx(2.0, abs=1e-12)

    def test_mixed_states(self, rng):
        U = random_orthonormal(rng, 6, 2)
        Y = LowRankFactor(U, np.diag([1.0, 0.5]), U)
        X = densify(Y)
        D = np.outer(U[:, 0], U[:, 0])
        assert runge_order_estimate(Y, X + 0.5 * D, X + 0.75 * D) == pytest.approx(1.0, abs=1e-10)

    def test_chain(self, rng):
        taus = [0.4, 0.2, 0.1, 0.05, 0.03]
        X = rng.standard_normal((3, 3))
        sols = [X + t**2 * np.eye(3) for t in taus]
        sols[3] = None
        out = chain_orders(taus, sols)
        assert [t for t, _ in out] == [0.4, 0.2]
        assert out[0][1] == pytest.approx(2.0) and out[1][1] is None

    def test_chain_underflow_marker(self):
        X = np.eye(2)
        assert chain_orders([0.2, 0.1, 0.05], [X, X, X]) == [(0.2, None)]


def small_heat(m=24, T=0.05):
    return make_problem("heat", m=m, T=T)


def linear_problem(m=16, T=0.3):
    P = make_problem("heat", m=m, T=T)
    return P.with_source(zero_source(m), label="heat-linear")


class TestReference:
    def test_linear_closed_form(self):
        P = linear_problem()
        E = la.expm(P.T * P.A.dense())
        exact = E @ P.dense_initial() @ E.T
        for tau_ref in (1e-3, 1e-4):
            ref = reference_solution(P, tau_ref=tau_ref)
            assert np.linalg.norm(ref.state - exact) <= 1e-9

    def test_checkpoint_cache_hit(self, tmp_path, monkeypatch):
        P = small_heat()
        first = reference_solution(P, "checkpoint", 1e-3, tmp_path)
        assert not first.cache_hit and (first.path / "X.mtx").exists()

        def boom(*a, **k):
            raise AssertionError("integration performed on a cache hit")

        monkeypatch.setattr(reference_mod, "compute_reference", boom)
        second = reference_solution(P, "checkpoint", 1e-3, tmp_path)
        assert second.cache_hit
        np.testing.assert_array_equal(second.state, first.state)

    def test_digest_depends_on_parameters(self):
        P = small_heat()
        assert reference_digest(P, 1e-3) != reference_digest(P, 2e-3)
        assert reference_digest(P, 1e-3) != reference_digest(small_heat(T=0.06), 1e-3)
        assert reference_digest(P, 1e-3) == reference_digest(small_heat(), 1e-3)

    def test_mismatch_recomputes(self, tmp_path, caplog):
        P = small_heat()
        first = reference_solution(P, "checkpoint", 1e-3, tmp_path)
        manifest = json.loads((first.path / "manifest.json").read_text())
        manifest["digest"] = "0" * 64
        (first.path / "manifest.json").write_text(json.dumps(manifest))
        with caplog.at_level(logging.WARNING):
            again = reference_solution(P, "checkpoint", 1e-3, tmp_path)
        assert not again.cache_hit
        assert "recomputing" in caplog.text
        np.testing.assert_array_equal(again.state, first.state)

    def test_policy_validation(self, tmp_path):
        with pytest.raises(ValueError):
            reference_solution(small_heat(), "magic")
        with pytest.raises(ValueError):
            reference_solution(small_heat(), "checkpoint")

    def test_cubic_reference_self_consistent(self):
        P = make_problem("cubic", m=64)
        a = reference_solution(P, tau_ref=1e-5).state
        b = reference_solution(P, tau_ref=2e-5).state
        assert np.linalg.norm(a - b) <= 1e-8


class TestSweep:
    def test_single_cell(self, tmp_path):
        report = convergence_sweep(small_heat(), [0.01], [4], tau_ref=1e-3, out_dir=tmp_path)
        assert len(report.rows) == 1 and report.orders == []
        rows = list(csv.reader((tmp_path / "convergence.csv").open()))
        assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 2
        assert json.loads((tmp_path / "report.json").read_text())["problem"] == "heat"

    def test_rows_sorted_and_orders(self):
        P = small_heat(m=32, T=0.1)
        report = convergence_sweep(P, [1e-3, 4e-3, 2e-3], [3, 12], tau_ref=1e-5)
        for mode in ("3", "12"):
            taus = [t for t, _ in report.errors(mode)]
            assert taus == sorted(taus, reverse=True)
            assert all(e >= 0 for _, e in report.errors(mode))
        (tau, p), = report.orders_for("12")
        assert tau == 4e-3 and 1.7 <= p <= 2.2
        errs = [e for _, e in report.errors("12")]
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)

    def test_csv_deterministic(self, tmp_path):
        P = small_heat()
        ref = reference_solution(P, tau_ref=1e-3)
        for name in ("a", "b"):
            convergence_sweep(P, [0.01, 0.005, 0.0025], [3, 6], reference=ref, out_dir=tmp_path / name)
        a = (tmp_path / "a" / "convergence.csv").read_bytes()
        b = (tmp_path / "b" / "convergence.csv").read_bytes()
        assert a == b

    def test_workers_match_serial(self):
        P = small_heat()
        ref = reference_solution(P, tau_ref=1e-3)
        serial = convergence_sweep(P, [0.01, 0.005], [3, 6], reference=ref)
        threaded = convergence_sweep(P, [0.01, 0.005], [3, 6], reference=ref, workers=4)
        assert [r.error for r in serial.rows] == [r.error for r in threaded.rows]

    def test_delta_diagnostic(self):
        P = make_problem("lyap-random", m=32, T=0.01)
        report = convergence_sweep(P, [0.005], [5, 11], tau_ref=1e-3)
        deltas = report.diagnostics["initial_truncation_error"]
        Y0, delta = P.initial_factor(5)
        assert deltas["5"] == pytest.approx(np.linalg.norm(densify(Y0) - P.dense_initial()))
        assert deltas["11"] < 1e-14

    def test_adaptive_column(self):
        P = make_problem("cubic", m=32, T=0.02)
        report = convergence_sweep(P, [0.005], [], [1e-6], tau_ref=1e-4, r_init=2)
        (row,) = report.rows
        assert row.rank_mode == "theta=1e-06" and row.status == "ok" and row.final_rank >= 2

    def test_diverged_cell_recorded(self, tmp_path):
        u = np.ones(8) / np.sqrt(8)
        P = ProblemSpec(
            build_laplacian_1d(GridSpec(8, 0.0, 1.0), 0.01),
            Nonlinearity(lambda t, Y: -Y * Y * Y),
            LowRankFactor(u[:, None], [[80.0]], u[:, None]),
            0.0, 1.0, "stiff-cube",
        )
        ref = Reference(np.zeros((8, 8)), 1e-6, "none", False)
        report = convergence_sweep(P, [0.1, 0.001], [2], reference=ref, out_dir=tmp_path)
        assert report.diverged
        assert [r.status for r in report.rows] == ["diverged", "ok"]
        rows = list(csv.reader((tmp_path / "convergence.csv").open()))
        assert rows[1][5] == "diverged"

    def test_needs_cells(self):
        with pytest.raises(ValueError):
            convergence_sweep(small_heat(), [], [2])


class TestSingularValues:
    def test_exact_rank(self, tmp_path, rng):
        m, r = 20, 3
        U = random_orthonormal(rng, m, r)
        Y0 = LowRankFactor(U, np.diag([1.0, 0.5, 0.25]), U)
        P = ProblemSpec(build_laplacian_1d(GridSpec(m, -np.pi, np.pi)), zero_source(m), Y0, 0.0, 0.05, "lin")
        sigma = singular_value_dump(P, tau=0.01, k=8, out_path=tmp_path / "sv.csv")
        assert np.count_nonzero(sigma > 1e-12) == r
        assert np.all(np.diff(sigma) <= 0) and np.all(sigma >= 0)
        rows = list(csv.reader((tmp_path / "sv.csv").open()))
        assert rows[0] == ["index", "sigma"] and len(rows) == 9
        assert float(rows[1][1]) == sigma[0]

    def test_lowrank_scheme_pads(self):
        sigma = singular_value_dump("cubic", "lowrank_strang", tau=0.01, T=0.02, k=5, m=16, rank=2)
        assert len(sigma) == 5 and sigma[2:].max() == 0.0

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            singular_value_dump("cubic", k=17, m=16, T=0.01)


class TestAdaptive:
    def test_huge_theta_floors(self, tmp_path):
        hist = adaptive_rank_run("cubic", 0.01, 1e3, 3, T=0.05, m=16, out_path=tmp_path / "r.csv")
        assert hist.ranks == [1] * 5
        assert all(r.floored for r in hist.records)
        rows = list(csv.reader((tmp_path / "r.csv").open()))
        assert rows[0] == ["step", "t", "rank", "tail_norm", "floored"] and len(rows) == 6

    def test_zero_threshold_growth(self):
        P = make_problem("cubic", m=16, T=0.03)
        hist = adaptive_rank_run(P, 0.01, 1e-300, 1)
        r0 = 1
        for k, rec in enumerate(hist.records, start=1):
            assert rec.rank <= min(4**k * r0, 16)
        assert hist.max_rank > r0

    def test_history_invariants(self):
        hist = adaptive_rank_run("cubic", 0.005, 1e-8, 3, T=0.05, m=32)
        ts = [r.t for r in hist.records]
        assert all(b > a for a, b in zip(ts, ts[1:]))
        assert min(hist.ranks) >= 1
        assert all(r.tail_norm <= 1e-8 or r.floored for r in hist.records)

    def test_validation(self):
        with pytest.raises(ValueError):
            adaptive_rank_run("cubic", 0.01, 0.0, 3, m=8)
        with pytest.raises(ValueError):
            adaptive_rank_run("cubic", 0.01, 1e-3, 0, m=8)


def test_heat_closed_form_matches_reference():
    """The eigen-basis solution and the dense fine-step reference agree."""
    P = small_heat(m=16, T=0.1)
    ref = reference_solution(P, tau_ref=1e-4).state
    exact = lyapunov_closed_form(P.A.dense(), P.dense_initial(), P.G(0.0, None), P.T)
    assert np.linalg.norm(ref - exact) <= 1e-6 * np.linalg.norm(exact)


def test_operator_handle_for_custom_problem():
    P = ProblemSpec(OperatorHandle(-np.eye(4)), zero_source(4), LowRankFactor(np.eye(4)[:, :1], [[1.0]], np.eye(4)[:, :1]), 0.0, 0.5)
    ref = reference_solution(P, tau_ref=0.01).state
    assert ref[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-12)
