"""Scalar threshold-power root and the single-epoch glue-pouring allocator.

Every higher-level algorithm reduces to :func:`pour_cells`: given a set of
(duration, gain) cells, raise a common glue level (power plus inverse gain,
equalized across active cells) until a target amount of energy or data is
used.  Channels activate in decreasing-gain order; a partially used cell
transmits exactly at its threshold power ``v*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from . import _kernel
from .model import GainOrderViolation, Policy, rate

TINY_BUDGET = 1e-12


@lru_cache(maxsize=1 << 16)
def _v_star_cached(gamma: float, eps: float) -> float:
    return _kernel.v_star(gamma, eps)


def v_star(gamma: float, epsilon: float) -> float:
    """Minimum efficient transmission power for a channel.

    The unique ``p >= 0`` with ``(p + epsilon) = (1/gamma + p) * ln(1 +
    gamma*p)``; a sub-channel used for less than a full epoch transmits at
    exactly this power.  Returns 0 when ``epsilon`` is 0.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    return _v_star_cached(float(gamma), float(epsilon))


def v_star_residual(gamma: float, epsilon: float, p: float) -> float:
    """Signed defect of the threshold equation at power p."""
    return (1.0 / gamma + p) * math.log1p(gamma * p) - (p + epsilon)


def activation_level(gains: Sequence[float], epsilon: float) -> float:
    """Glue level at which the first drop of energy enters these cells."""
    return min(1.0 / g + v_star(g, epsilon) for g in gains)


def pour_cells(
    taus: Sequence[float],
    gains: Sequence[float],
    epsilon: float,
    target: float,
    data_target: bool = False,
) -> tuple[list[float], list[float], float]:
    """Common-level pour across arbitrary cells.

    Returns (powers, durations, glue level).  With ``data_target`` the
    target is in nats instead of microjoules.  Ties in the activation
    threshold are broken by cell order (callers list cells epoch-major,
    channel-minor, which yields earliest-epoch/lowest-channel-first
    allocation).
    """
    vs = [_v_star_cached(float(g), float(epsilon)) for g in gains]
    return _kernel.pour(
        [float(t) for t in taus], [float(g) for g in gains], vs,
        float(epsilon), float(target), bool(data_target),
    )


def cells_energy(taus, gains, powers, durations, epsilon) -> float:
    return sum(th * (p + epsilon) for th, p in zip(durations, powers) if th > 0.0)


def cells_data(taus, gains, powers, durations) -> float:
    return sum(th * rate(g, p) for g, th, p in zip(gains, durations, powers) if th > 0.0)


@dataclass(frozen=True)
class GlueAllocation:
    """Single-epoch allocation at a common glue level.

    ``glue_level`` is None when the budget is degenerate (below 1e-12) and
    nothing is allocated.
    """

    glue_level: float | None
    v_star: tuple[float, ...]
    power: tuple[float, ...]
    duration: tuple[float, ...]
    energy_used: float
    data: float


def epoch_glue_pour(
    gains: Sequence[float], tau: float, epsilon: float, budget: float
) -> GlueAllocation:
    """Allocate an energy budget to the sub-channels of one epoch.

    Maximizes delivered data subject to the per-channel duration cap and
    the budget; the budget is consumed exactly (to rounding) whenever any
    channel is active.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if not tau > 0:
        raise ValueError("tau must be positive")
    k = len(gains)
    vs = tuple(v_star(g, epsilon) for g in gains)
    if budget <= TINY_BUDGET:
        zero = (0.0,) * k
        return GlueAllocation(None, vs, zero, zero, 0.0, 0.0)
    p, th, xi = pour_cells([tau] * k, gains, epsilon, budget)
    return GlueAllocation(
        glue_level=xi,
        v_star=vs,
        power=tuple(p),
        duration=tuple(th),
        energy_used=cells_energy([tau] * k, gains, p, th, epsilon),
        data=cells_data([tau] * k, gains, p, th),
    )


def epoch_data_pour(
    gains: Sequence[float], tau: float, epsilon: float, data: float
) -> GlueAllocation:
    """Minimum-energy allocation delivering `data` nats in one epoch."""
    if data < 0:
        raise ValueError("data must be nonnegative")
    k = len(gains)
    vs = tuple(v_star(g, epsilon) for g in gains)
    if data <= TINY_BUDGET:
        zero = (0.0,) * k
        return GlueAllocation(None, vs, zero, zero, 0.0, 0.0)
    p, th, xi = pour_cells([tau] * k, gains, epsilon, data, data_target=True)
    return GlueAllocation(
        glue_level=xi,
        v_star=vs,
        power=tuple(p),
        duration=tuple(th),
        energy_used=cells_energy([tau] * k, gains, p, th, epsilon),
        data=cells_data([tau] * k, gains, p, th),
    )


def two_level_reference(
    gamma1: float, gamma2: float, tau1: float, tau2: float,
    epsilon: float, e1: float,
) -> Policy:
    """Reference allocation for one channel over two fading levels.

    Case-by-case closed form for a single energy arrival spread over a good
    epoch followed by a worse one (gamma1 > gamma2 required); the final
    regime is classical water-filling over both epochs.  Used as an
    independent cross-check of the walk-based allocator.
    """
    if not gamma1 > gamma2 > 0:
        raise GainOrderViolation(f"need gamma1 > gamma2 > 0, got {gamma1}, {gamma2}")
    if e1 < 0:
        raise ValueError("e1 must be nonnegative")
    p1s = v_star(gamma1, epsilon)
    p2s = v_star(gamma2, epsilon)
    gap = 1.0 / gamma2 - 1.0 / gamma1
    if e1 <= TINY_BUDGET:
        return Policy.zeros(2, 1)
    if e1 <= tau1 * (p1s + epsilon) and p1s + epsilon > 0.0:
        return Policy(power=((p1s,), (0.0,)),
                      duration=((e1 / (p1s + epsilon),), (0.0,)))
    if e1 <= tau1 * (p2s + gap + epsilon):
        return Policy(power=((e1 / tau1 - epsilon,), (0.0,)),
                      duration=((tau1,), (0.0,)))
    b3 = tau1 * (p2s + gap + epsilon) + tau2 * (p2s + epsilon)
    if e1 <= b3 and p2s + epsilon > 0.0:
        th2 = (e1 - tau1 * (p2s + gap + epsilon)) / (p2s + epsilon)
        return Policy(power=((p2s + gap,), (p2s,)),
                      duration=((tau1,), (th2,))).canonical()
    w = (e1 - epsilon * (tau1 + tau2) + tau1 / gamma1 + tau2 / gamma2) / (tau1 + tau2)
    return Policy(power=((w - 1.0 / gamma1,), (w - 1.0 / gamma2,)),
                  duration=((tau1,), (tau2,)))
