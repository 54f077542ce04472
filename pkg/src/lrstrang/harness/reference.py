"""Reference solutions: dense full-rank Strang runs at a fine step.

A computed reference can be checkpointed as a Matrix Market file next to a
JSON manifest holding a content hash of everything that determines it
(problem label and parameters, ``tau_ref``, inner substeps). A later call
with the same hash loads the file instead of integrating again.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..integrators import SchemeConfig, integrate
from ..lowrank import TruncationMode
from ..mmio import read_mtx, write_mtx
from ..problems import ProblemSpec

log = logging.getLogger(__name__)

DEFAULT_TAU_REF = 1e-5
POLICIES = ("dense-strang-fine", "checkpoint")
DENSE_LIMIT = 512

_write_locks: dict[str, threading.Lock] = {}
_write_locks_guard = threading.Lock()


@dataclass
class Reference:
    state: np.ndarray
    tau_ref: float
    digest: str
    cache_hit: bool
    path: Path | None = None
    seconds: float = 0.0

    def describe(self) -> str:
        src = f"checkpoint {self.path}" if self.cache_hit else "computed"
        return f"dense full-rank Strang, tau_ref={self.tau_ref:g}, {src}"


def reference_digest(problem: ProblemSpec, tau_ref: float, inner_substeps: int = 1) -> str:
    payload = {
        "label": problem.label,
        "params": problem.params,
        "t0": problem.t0,
        "T": problem.T,
        "tau_ref": tau_ref,
        "inner_substeps": inner_substeps,
        "scheme": "fullrank_strang",
    }
    blob = json.dumps(payload, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()


def _lock_for(digest: str) -> threading.Lock:
    with _write_locks_guard:
        return _write_locks.setdefault(digest, threading.Lock())


def compute_reference(problem: ProblemSpec, tau_ref: float = DEFAULT_TAU_REF, inner_substeps: int = 1) -> np.ndarray:
    if problem.m > DENSE_LIMIT:
        raise ValueError(f"dense reference limited to m <= {DENSE_LIMIT}, got {problem.m}")
    cfg = SchemeConfig(tau_ref, TruncationMode.fixed(1), inner_substeps)
    return integrate(problem, "fullrank_strang", cfg).state


def reference_solution(
    problem: ProblemSpec,
    policy: str = "dense-strang-fine",
    tau_ref: float = DEFAULT_TAU_REF,
    checkpoint_dir=None,
    inner_substeps: int = 1,
) -> Reference:
    """Fine-step dense reference for ``problem``, reusing a checkpoint if one matches.

    With ``policy="checkpoint"`` a checkpoint directory is required; a
    missing or mismatching checkpoint is recomputed and written.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown reference policy {policy!r}")
    if policy == "checkpoint" and checkpoint_dir is None:
        raise ValueError("policy 'checkpoint' needs a checkpoint directory")
    digest = reference_digest(problem, tau_ref, inner_substeps)

    if checkpoint_dir is None:
        t = time.perf_counter()
        X = compute_reference(problem, tau_ref, inner_substeps)
        return Reference(X, tau_ref, digest, False, None, time.perf_counter() - t)

    d = Path(checkpoint_dir) / f"{problem.label or 'problem'}_m{problem.m}_{digest[:12]}"
    with _lock_for(digest):
        manifest_path = d / "manifest.json"
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
            if manifest.get("digest") == digest and (d / "X.mtx").exists():
                return Reference(read_mtx(d / "X.mtx"), tau_ref, digest, True, d)
            log.warning("checkpoint %s does not match the requested reference; recomputing", d)
        t = time.perf_counter()
        X = compute_reference(problem, tau_ref, inner_substeps)
        seconds = time.perf_counter() - t
        d.mkdir(parents=True, exist_ok=True)
        write_mtx(d / "X.mtx", X)
        manifest = {
            "digest": digest,
            "label": problem.label,
            "params": problem.params,
            "tau_ref": tau_ref,
            "inner_substeps": inner_substeps,
            "m": problem.m,
            "T": problem.T,
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
        return Reference(X, tau_ref, digest, False, d, seconds)
