"""Deadline throughput maximization with a finite battery.

Directional backward glue pouring: harvested packets are allocated from the
last arrival to the first; after each pour, forward equalization sweeps
remove glue-level inversions between adjacent epochs, transferring energy
forward only, capped by the battery headroom at each boundary.  At the
fixed point the glue level drops across a boundary only where the battery
is full and rises only where it is empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gluekernel import (
    activation_level,
    cells_data,
    cells_energy,
    pour_cells,
    v_star,
)
from .model import (
    THROUGHPUT,
    Policy,
    Scenario,
    audit_policy,
    validate_scenario,
)

TINY = 1e-12
LEVEL_TOL = 1e-11
_MAX_PASSES = 10_000


@dataclass(frozen=True)
class ThroughputSolution:
    policy: Policy
    throughput: float
    glue_levels: tuple[float | None, ...]
    residuals: tuple[float, ...]
    consumed: tuple[float, ...]


@dataclass(frozen=True)
class StructureReport:
    ok: bool
    failures: tuple[tuple[str, str], ...] = ()


class _State:
    """Per-epoch budgets plus the cell allocation they imply."""

    def __init__(self, s: Scenario):
        self.s = s
        self.I, self.K = s.num_epochs, s.num_channels
        self.eps = s.processing_cost
        self.budgets = [0.0] * self.I
        self.p = [[0.0] * self.K for _ in range(self.I)]
        self.th = [[0.0] * self.K for _ in range(self.I)]
        self.xi: list[float | None] = [None] * self.I

    def pour(self, i: int, budget: float):
        self.budgets[i] = budget
        taus = [self.s.epoch_durations[i]] * self.K
        if budget <= TINY:
            self.p[i] = [0.0] * self.K
            self.th[i] = [0.0] * self.K
            self.xi[i] = None
            return
        p, th, xi = pour_cells(taus, self.s.gains[i], self.eps, budget)
        self.p[i], self.th[i], self.xi[i] = p, th, xi

    def level(self, i: int) -> float:
        if self.xi[i] is not None:
            return self.xi[i]
        return activation_level(self.s.gains[i], self.eps)

    def epoch_energy(self, i: int, p, th) -> float:
        taus = [self.s.epoch_durations[i]] * self.K
        return cells_energy(taus, self.s.gains[i], p, th, self.eps)


def solve_offline_throughput(s: Scenario) -> ThroughputSolution:
    """Compute the data-maximizing policy for a backlogged transmitter."""
    validate_scenario(s, THROUGHPUT).raise_if_failed()
    I, K = s.num_epochs, s.num_channels
    cum_e = s.cumulative_energy()
    emax = s.battery_capacity
    st = _State(s)

    # transfer across boundary m may not push the prefix consumption below
    # this floor, else the battery overflows at the next arrival
    if s.unbounded_battery:
        floor = [0.0] * I
    else:
        floor = [max(0.0, cum_e[min(m + 1, I - 1)] - emax) if m + 1 < I else 0.0
                 for m in range(I)]

    def try_fix(m: int, unallocated_before: float) -> bool:
        if st.budgets[m] <= TINY:
            return False
        if st.level(m) <= st.level(m + 1) + LEVEL_TOL:
            return False
        total = st.budgets[m] + st.budgets[m + 1]
        taus2 = [s.epoch_durations[m]] * K + [s.epoch_durations[m + 1]] * K
        gains2 = list(s.gains[m]) + list(s.gains[m + 1])
        p2, th2, _ = pour_cells(taus2, gains2, st.eps, total)
        e_m = st.epoch_energy(m, p2[:K], th2[:K])
        delta = st.budgets[m] - e_m
        if delta <= TINY:
            return False
        prefix = unallocated_before + sum(st.budgets[: m + 1])
        headroom = prefix - floor[m]
        if delta > headroom:
            if headroom <= TINY:
                return False
            delta = headroom
            e_m = st.budgets[m] - delta
        st.pour(m, e_m)
        st.pour(m + 1, total - e_m)
        return True

    for i in reversed(range(I)):
        st.pour(i, float(s.energy_arrivals[i]))
        before = float(cum_e[i - 1]) if i > 0 else 0.0
        for _ in range(_MAX_PASSES):
            changed = False
            for m in range(i, I - 1):
                changed |= try_fix(m, before)
            if not changed:
                break
        else:  # pragma: no cover - safety guard
            raise RuntimeError("forward equalization did not converge")

    policy = Policy(
        power=st.p,
        duration=st.th,
        glue_levels=tuple(x if x is not None else math.nan for x in st.xi),
        v_star=tuple(tuple(v_star(g, st.eps) for g in row) for row in s.gains),
    ).canonical()
    ledger = audit_policy(s, policy, check_data=False)
    throughput = float(policy.data_sent(s).sum())
    return ThroughputSolution(
        policy=policy,
        throughput=throughput,
        glue_levels=tuple(st.xi),
        residuals=ledger.residual,
        consumed=ledger.consumed,
    )


def verify_throughput_structure(s: Scenario, pol: Policy, tol: float = 1e-6) -> StructureReport:
    """Check the optimality structure of a feasible throughput policy.

    Clauses: (a) active channels of an epoch share one glue level; (b) a
    level drop across a boundary needs a full battery there and a rise an
    empty one; (c) partially used cells transmit at v* and full cells at or
    above it, inactive cells sit above the epoch level; (d) the final
    battery residual is zero.
    """
    failures: list[tuple[str, str]] = []
    ledger = audit_policy(s, pol, check_data=False)
    if not ledger.feasible:
        failures.append(("audit", f"policy infeasible: {ledger.violations}"))
    eps = s.processing_cost
    p, th = pol.power_array(), pol.duration_array()
    taus = np.asarray(s.epoch_durations)
    I = s.num_epochs
    levels: list[float | None] = []
    for i in range(I):
        cell_levels = [1.0 / s.gains[i][k] + p[i, k]
                       for k in range(s.num_channels)
                       if p[i, k] > tol and th[i, k] > tol]
        if not cell_levels:
            levels.append(None)
            continue
        xi = float(np.mean(cell_levels))
        levels.append(xi)
        spread = max(cell_levels) - min(cell_levels)
        if spread > tol:
            failures.append(("common_glue", f"epoch {i + 1} glue spread {spread:.3g}"))
        for k in range(s.num_channels):
            vs = v_star(s.gains[i][k], eps)
            if p[i, k] > tol and th[i, k] > tol:
                if th[i, k] < taus[i] - tol:
                    if abs(p[i, k] - vs) > tol:
                        failures.append(
                            ("partial_at_vstar",
                             f"epoch {i + 1} ch {k + 1}: p={p[i, k]:.6g} vs v*={vs:.6g}"))
                elif p[i, k] < vs - tol:
                    failures.append(
                        ("full_above_vstar",
                         f"epoch {i + 1} ch {k + 1}: p={p[i, k]:.6g} < v*={vs:.6g}"))
            else:
                thr = 1.0 / s.gains[i][k] + vs
                if xi > thr + tol:
                    failures.append(
                        ("inactive_below_level",
                         f"epoch {i + 1} ch {k + 1}: threshold {thr:.6g} below level {xi:.6g}"))
    cum_e = s.cumulative_energy()
    for i in range(I - 1):
        left = levels[i]
        if left is None:
            continue
        right = levels[i + 1]
        if right is None:
            right = activation_level(s.gains[i + 1], eps)
        stored = ledger.residual[i]
        if left > right + tol:
            if s.unbounded_battery:
                failures.append(("level_drop", f"boundary {i + 1}: drop without battery cap"))
            else:
                after_arrival = stored + s.energy_arrivals[i + 1]
                if abs(after_arrival - s.battery_capacity) > tol:
                    failures.append(
                        ("full_battery",
                         f"boundary {i + 1}: level drops but battery at {after_arrival:.6g} "
                         f"of {s.battery_capacity}"))
        elif levels[i + 1] is not None and levels[i + 1] > left + tol:
            if abs(stored) > tol:
                failures.append(
                    ("empty_battery",
                     f"boundary {i + 1}: level rises but residual {stored:.6g}"))
    if ledger.residual and abs(ledger.final_residual) > tol and any(
        lv is not None for lv in levels
    ):
        failures.append(("final_residual", f"{ledger.final_residual:.6g} uJ left at deadline"))
    return StructureReport(ok=not failures, failures=tuple(failures))


def directional_water_filling(s: Scenario) -> float:
    """Standalone zero-processing-cost reference objective.

    Classical per-epoch water-filling (all active durations equal the epoch
    length) combined with the same forward-only transfer rule; shares no
    code with the glue allocator.  Only defined for processing_cost == 0.
    """
    if s.processing_cost != 0:
        raise ValueError("water-filling reference requires zero processing cost")
    I, K = s.num_epochs, s.num_channels
    taus = list(s.epoch_durations)
    invg = [sorted(1.0 / g for g in s.gains[i]) for i in range(I)]

    def wf_level(i: int, c: float) -> float:
        # highest water level w with tau * sum_k max(0, w - 1/g_k) == c
        inv = invg[i]
        for n in range(K, 0, -1):
            w = (c / taus[i] + sum(inv[:n])) / n
            if w >= inv[n - 1] and (n == K or w <= inv[n]):
                return w
        return inv[0]

    def wf_data(i: int, c: float) -> float:
        w = wf_level(i, c)
        return sum(0.5 * taus[i] * math.log(w / v) for v in invg[i] if v < w)

    def wf_split(i: int, j: int, total: float) -> float:
        # energy for epoch i when (i, j) share `total` at a common level
        lo, hi = 0.0, total
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if wf_level(i, mid) > wf_level(j, total - mid):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    cum_e = s.cumulative_energy()
    emax = s.battery_capacity
    budgets = [0.0] * I
    for i in reversed(range(I)):
        budgets[i] = float(s.energy_arrivals[i])
        before = float(cum_e[i - 1]) if i > 0 else 0.0
        for _ in range(_MAX_PASSES):
            changed = False
            for m in range(i, I - 1):
                if budgets[m] <= TINY:
                    continue
                if wf_level(m, budgets[m]) <= wf_level(m + 1, budgets[m + 1]) + LEVEL_TOL:
                    continue
                total = budgets[m] + budgets[m + 1]
                e_m = wf_split(m, m + 1, total)
                delta = budgets[m] - e_m
                if delta <= TINY:
                    continue
                if not s.unbounded_battery and m + 1 < I:
                    floor_m = max(0.0, cum_e[m + 1] - emax)
                    headroom = before + sum(budgets[: m + 1]) - floor_m
                    if delta > headroom:
                        if headroom <= TINY:
                            continue
                        delta = headroom
                        e_m = budgets[m] - delta
                budgets[m], budgets[m + 1] = e_m, total - e_m
                changed = True
            if not changed:
                break
    return sum(wf_data(i, budgets[i]) for i in range(I) if budgets[i] > TINY)
