"""Remaining-energy maximization with data arrivals (unbounded battery).

Data packets are scheduled from the last arrival to the first.  A packet is
first delivered entirely inside its arrival epoch at whatever glue level
that takes; forward sweeps then push data later to (a) remove glue-level
inversions (equal levels minimize energy at fixed total data) and (b)
respect the cumulative-energy caps, draining the latest arrivals first.
At the fixed point the glue level never decreases over time and rises only
where the battery or the data buffer empties.
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
    ENERGY,
    Infeasible,
    Policy,
    Scenario,
    audit_policy,
    validate_scenario,
)
from .offline_throughput import StructureReport

TINY = 1e-12
LEVEL_TOL = 1e-11
CAP_TOL = 1e-11
_MAX_PASSES = 10_000


@dataclass(frozen=True)
class FeasibilityReport:
    """Slack is the extra data (nats) deliverable in the last epoch; a
    negative slack is the shortfall that makes the instance infeasible."""

    slack: float
    feasible: bool


@dataclass(frozen=True)
class EnergySolution:
    policy: Policy
    remaining_energy: float
    glue_levels: tuple[float | None, ...]
    delivered: float
    consumed: float


class _Alloc:
    def __init__(self, s: Scenario):
        self.s = s
        self.I, self.K = s.num_epochs, s.num_channels
        self.eps = s.processing_cost
        self.taus = s.epoch_durations
        self.cum_e = s.cumulative_energy()
        self.data = [0.0] * self.I
        self.energy = [0.0] * self.I
        self.p = [[0.0] * self.K for _ in range(self.I)]
        self.th = [[0.0] * self.K for _ in range(self.I)]
        self.xi: list[float | None] = [None] * self.I

    def _cells(self, i: int):
        return [self.taus[i]] * self.K, self.s.gains[i]

    def _store(self, i, p, th):
        taus, gains = self._cells(i)
        self.p[i], self.th[i] = p, th
        self.energy[i] = cells_energy(taus, gains, p, th, self.eps)
        self.data[i] = cells_data(taus, gains, p, th)

    def pour_data(self, i: int, target: float):
        taus, gains = self._cells(i)
        if target <= TINY:
            self.p[i] = [0.0] * self.K
            self.th[i] = [0.0] * self.K
            self.energy[i] = 0.0
            self.data[i] = 0.0
            self.xi[i] = None
            return
        p, th, xi = pour_cells(taus, gains, self.eps, target, data_target=True)
        self._store(i, p, th)
        self.data[i] = target  # exact by construction; avoid re-rounding
        self.xi[i] = xi

    def pour_energy(self, i: int, target: float):
        taus, gains = self._cells(i)
        if target <= TINY:
            self.pour_data(i, 0.0)
            return
        p, th, xi = pour_cells(taus, gains, self.eps, target)
        self._store(i, p, th)
        self.xi[i] = xi

    def level(self, i: int) -> float:
        if self.xi[i] is not None:
            return self.xi[i]
        return activation_level(self.s.gains[i], self.eps)

    def cap(self, m: int) -> float:
        """Energy epoch m may consume given everything consumed before it."""
        return float(self.cum_e[m]) - sum(self.energy[:m])

    def run(self, requirements) -> bool:
        for i in reversed(range(self.I)):
            if requirements[i] <= TINY and self.data[i] <= TINY:
                continue
            self.pour_data(i, self.data[i] + float(requirements[i]))
            if not self._sweep(i):
                return False
        return True

    def _sweep(self, start: int) -> bool:
        for _ in range(_MAX_PASSES):
            changed = False
            for m in range(start, self.I):
                out = self._fix(m)
                if out is None:
                    return False
                changed |= out
            if not changed:
                return True
        raise RuntimeError("forward equalization did not converge")

    def _fix(self, m: int):
        """Returns True if changed, False if stable, None if infeasible."""
        cap_m = self.cap(m)
        if self.energy[m] > cap_m + CAP_TOL:
            if m == self.I - 1:
                return None
            moved = self.data[m]
            self.pour_energy(m, max(cap_m, 0.0))
            self.pour_data(m + 1, self.data[m + 1] + (moved - self.data[m]))
            return True
        if m == self.I - 1 or self.data[m] <= TINY:
            return False
        if self.level(m) <= self.level(m + 1) + LEVEL_TOL:
            return False
        total_d = self.data[m] + self.data[m + 1]
        taus2 = [self.taus[m]] * self.K + [self.taus[m + 1]] * self.K
        gains2 = list(self.s.gains[m]) + list(self.s.gains[m + 1])
        p2, th2, _ = pour_cells(taus2, gains2, self.eps, total_d, data_target=True)
        e_m = cells_energy([self.taus[m]] * self.K, self.s.gains[m], p2[:self.K],
                           th2[:self.K], self.eps)
        if e_m > cap_m + CAP_TOL:
            moved = self.data[m]
            self.pour_energy(m, max(cap_m, 0.0))
            self.pour_data(m + 1, self.data[m + 1] + (moved - self.data[m]))
            return True
        d_m = cells_data([self.taus[m]] * self.K, self.s.gains[m], p2[:self.K], th2[:self.K])
        if self.data[m] - d_m <= TINY:
            return False
        self.pour_data(m, d_m)
        self.pour_data(m + 1, total_d - d_m)
        return True


def _adjusted_requirements(base: list[float], extra: float) -> list[float]:
    req = list(base)
    if extra >= 0:
        req[-1] += extra
        return req
    deficit = -extra
    for j in reversed(range(len(req))):
        cut = min(req[j], deficit)
        req[j] -= cut
        deficit -= cut
        if deficit <= 0:
            break
    return req


def check_feasibility(s: Scenario) -> FeasibilityReport:
    """Largest extra last-epoch data the energy profile still supports.

    Feasible (all arriving packets deliverable by the deadline) iff the
    slack is nonnegative.
    """
    validate_scenario(s, ENERGY).raise_if_failed()
    base = [float(b) for b in s.data_arrivals]
    total_b = sum(base)

    def deliverable(extra: float) -> bool:
        return _Alloc(s).run(_adjusted_requirements(base, extra))

    if deliverable(0.0):
        lo, hi = 0.0, 1.0
        while deliverable(hi):
            lo, hi = hi, hi * 2.0
            if hi > 1e12:  # pragma: no cover - energy is finite
                break
    else:
        lo, hi = -total_b, 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-10 + 1e-12 * abs(mid):
            break
        if deliverable(mid):
            lo = mid
        else:
            hi = mid
    slack = lo
    return FeasibilityReport(slack=slack, feasible=slack >= -1e-9)


def deliverable(s: Scenario) -> bool:
    """Cheap feasibility probe (no slack)."""
    validate_scenario(s, ENERGY).raise_if_failed()
    return _Alloc(s).run([float(b) for b in s.data_arrivals])


def solve_offline_energy(s: Scenario) -> EnergySolution:
    """Deliver every data packet with minimal drained energy."""
    validate_scenario(s, ENERGY).raise_if_failed()
    alloc = _Alloc(s)
    if not alloc.run([float(b) for b in s.data_arrivals]):
        raise Infeasible("harvested energy cannot deliver all data packets")
    policy = Policy(
        power=alloc.p,
        duration=alloc.th,
        glue_levels=tuple(x if x is not None else math.nan for x in alloc.xi),
        v_star=tuple(tuple(v_star(g, alloc.eps) for g in row) for row in s.gains),
    ).canonical()
    consumed = float(sum(alloc.energy))
    total_e = float(s.cumulative_energy()[-1]) if s.num_epochs else 0.0
    return EnergySolution(
        policy=policy,
        remaining_energy=total_e - consumed,
        glue_levels=tuple(alloc.xi),
        delivered=float(sum(alloc.data)),
        consumed=consumed,
    )


def verify_energy_structure(s: Scenario, pol: Policy, tol: float = 1e-6) -> StructureReport:
    """Structural optimality checks for an energy-maximizing policy.

    The glue level must be common within an epoch, never decrease over
    time, and rise across a boundary only when the battery or the data
    buffer empties there; partial cells transmit at v*.
    """
    failures: list[tuple[str, str]] = []
    ledger = audit_policy(s, pol)
    if not ledger.feasible:
        failures.append(("audit", f"policy infeasible: {ledger.violations}"))
    total_b = float(s.cumulative_data()[-1])
    if abs(ledger.total_delivered - total_b) > tol:
        failures.append(
            ("exact_delivery", f"delivered {ledger.total_delivered:.9g} vs {total_b:.9g}"))
    eps = s.processing_cost
    p, th = pol.power_array(), pol.duration_array()
    taus = np.asarray(s.epoch_durations)
    levels: list[float | None] = []
    for i in range(s.num_epochs):
        cell_levels = [1.0 / s.gains[i][k] + p[i, k]
                       for k in range(s.num_channels)
                       if p[i, k] > tol and th[i, k] > tol]
        if not cell_levels:
            levels.append(None)
            continue
        xi = float(np.mean(cell_levels))
        levels.append(xi)
        if max(cell_levels) - min(cell_levels) > tol:
            failures.append(("common_glue",
                             f"epoch {i + 1} glue spread {max(cell_levels) - min(cell_levels):.3g}"))
        for k in range(s.num_channels):
            vs = v_star(s.gains[i][k], eps)
            if p[i, k] > tol and th[i, k] > tol:
                if th[i, k] < taus[i] - tol and abs(p[i, k] - vs) > tol:
                    failures.append(("partial_at_vstar",
                                     f"epoch {i + 1} ch {k + 1}: p={p[i, k]:.6g} vs v*={vs:.6g}"))
                elif th[i, k] >= taus[i] - tol and p[i, k] < vs - tol:
                    failures.append(("full_above_vstar",
                                     f"epoch {i + 1} ch {k + 1}: p={p[i, k]:.6g} < v*={vs:.6g}"))
            else:
                thr = 1.0 / s.gains[i][k] + vs
                if xi > thr + tol:
                    failures.append(("inactive_below_level",
                                     f"epoch {i + 1} ch {k + 1}: threshold below epoch level"))
    cum_b = s.cumulative_data()
    active = [i for i, lv in enumerate(levels) if lv is not None]
    for a, b in zip(active, active[1:]):
        if levels[b] < levels[a] - tol:
            failures.append(("level_decrease",
                             f"glue level drops {levels[a]:.6g} -> {levels[b]:.6g} "
                             f"between epochs {a + 1} and {b + 1}"))
        elif levels[b] > levels[a] + tol:
            hit = False
            for n in range(a, b):
                battery_empty = abs(ledger.residual[n]) <= tol and (
                    n + 1 < s.num_epochs and s.energy_arrivals[n + 1] > 0)
                buffer_empty = abs(ledger.delivered[n] - cum_b[n]) <= tol and (
                    n + 1 < s.num_epochs and s.data_arrivals[n + 1] > 0)
                if battery_empty or buffer_empty:
                    hit = True
                    break
            if not hit:
                failures.append(("level_increase",
                                 f"glue rises between epochs {a + 1} and {b + 1} with "
                                 "slack battery and buffer"))
    return StructureReport(ok=not failures, failures=tuple(failures))
