"""Runge-rule order estimates from solutions at halved step sizes."""

from __future__ import annotations

import math
from typing import Sequence

from ..errors import OrderUndefinedError
from ..lowrank import state_distance

UNDERFLOW = 1e-15


def order_from_differences(d_coarse: float, d_fine: float, floor: float = UNDERFLOW) -> float:
    """``log2(d_coarse / d_fine)``; raises when ``d_fine`` is below ``floor``."""
    if not (d_fine > floor and d_coarse > 0) or not math.isfinite(d_coarse) or not math.isfinite(d_fine):
        raise OrderUndefinedError(f"order undefined: differences {d_coarse:.3e}, {d_fine:.3e}")
    return math.log2(d_coarse / d_fine)


def runge_order_estimate(sol_tau, sol_half, sol_quarter, floor: float = UNDERFLOW) -> float:
    """Observed order from three solutions at ``tau``, ``tau/2``, ``tau/4``.

    Solutions may be dense arrays or low-rank factors, in any mix.
    """
    return order_from_differences(
        state_distance(sol_tau, sol_half),
        state_distance(sol_half, sol_quarter),
        floor,
    )


def is_halving(taus: Sequence[float], i: int, rtol: float = 1e-9) -> bool:
    """True when ``taus[i:i+3]`` is a chain ``tau, tau/2, tau/4``."""
    if i + 2 >= len(taus):
        return False
    t0, t1, t2 = taus[i], taus[i + 1], taus[i + 2]
    return abs(t1 - t0 / 2) <= rtol * t0 and abs(t2 - t0 / 4) <= rtol * t0


def chain_orders(taus: Sequence[float], solutions: Sequence) -> list[tuple[float, float | None]]:
    """Runge estimates along a descending step-size list.

    One entry per ``tau`` that starts a halving triple; ``None`` marks
    estimates that are undefined (underflowed difference or a missing
    solution, e.g. a diverged run).
    """
    out = []
    for i in range(len(taus)):
        if not is_halving(taus, i):
            continue
        trio = solutions[i : i + 3]
        if any(s is None for s in trio):
            out.append((taus[i], None))
            continue
        try:
            out.append((taus[i], runge_order_estimate(*trio)))
        except OrderUndefinedError:
            out.append((taus[i], None))
    return out
