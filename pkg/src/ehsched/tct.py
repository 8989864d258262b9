"""Transmission-completion-time minimization.

The completion epoch is bracketed first: the smallest epoch whose end lies
after the last nonzero data arrival and whose end-of-epoch deadline admits
delivery of every packet.  Within that epoch the deadline is bisected on
the feasibility of the energy-maximization problem; the final policy is the
minimum-energy schedule at the resulting deadline, which depletes the
battery.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    TCT,
    NeverFeasible,
    Policy,
    Scenario,
    validate_scenario,
)
from .offline_energy import _Alloc, solve_offline_energy

_BISECT_TOL_S = 1e-9


@dataclass(frozen=True)
class TctResult:
    bracket_epoch: int        # 1-based epoch in which transmission completes
    t_star: float             # completion offset into that epoch, in (0, tau_m]
    t_min: float              # epoch start + t_star
    policy: Policy
    remaining_energy: float
    glue_levels: tuple[float | None, ...]


def _deliverable(s: Scenario) -> bool:
    return _Alloc(s).run([float(b) for b in s.data_arrivals])


def find_bracket_epoch(s: Scenario) -> int:
    """Smallest 1-based epoch index m whose end time exceeds the last
    nonzero data arrival and admits a feasible delivery at deadline
    end(m)."""
    validate_scenario(s, TCT).raise_if_failed()
    nonzero = [i for i, b in enumerate(s.data_arrivals) if b > 0]
    if not nonzero:
        raise NeverFeasible("no data packet arrives")
    starts = s.event_times
    last_arrival = starts[nonzero[-1]]
    end = 0.0
    for m in range(s.num_epochs):
        end += s.epoch_durations[m]
        if end <= last_arrival:
            continue
        if _deliverable(s.truncated(end)):
            return m + 1
    raise NeverFeasible("no deadline within the horizon delivers all data")


def solve_tct(s: Scenario) -> TctResult:
    """Minimize the delivery time of all data packets."""
    m = find_bracket_epoch(s)
    starts = s.event_times
    start_m = starts[m - 1]
    tau_m = s.epoch_durations[m - 1]

    lo, hi = 0.0, tau_m
    for _ in range(200):
        if hi - lo <= _BISECT_TOL_S:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _deliverable(s.truncated(start_m + mid)):
            hi = mid
        else:
            lo = mid
    t_min = start_m + hi
    sol = solve_offline_energy(s.truncated(t_min))
    policy = _pad_policy(_equalize_tied_last_epoch(s.truncated(t_min), sol.policy), s)
    return TctResult(
        bracket_epoch=m,
        t_star=hi,
        t_min=t_min,
        policy=policy,
        remaining_energy=sol.remaining_energy,
        glue_levels=sol.glue_levels,
    )


def _equalize_tied_last_epoch(s: Scenario, pol: Policy) -> Policy:
    """Equalize durations among equal-gain bursty channels of the last epoch.

    Optima are non-unique under exact gain ties; splitting the tied bursty
    time equally pins a canonical representative.  Power and data are
    unchanged (tied channels transmit at the same threshold power).
    """
    i = s.num_epochs - 1
    p = [list(r) for r in pol.power]
    th = [list(r) for r in pol.duration]
    by_gain: dict[float, list[int]] = {}
    for k in range(s.num_channels):
        if th[i][k] > 0:
            by_gain.setdefault(s.gains[i][k], []).append(k)
    for gain, ks in by_gain.items():
        bursty = [k for k in ks if th[i][k] < s.epoch_durations[i] - 1e-12]
        if len(bursty) > 1:
            powers = {round(p[i][k], 12) for k in bursty}
            if len(powers) == 1:
                mean = sum(th[i][k] for k in bursty) / len(bursty)
                for k in bursty:
                    th[i][k] = mean
    return Policy(power=p, duration=th, glue_levels=pol.glue_levels, v_star=pol.v_star)


def _pad_policy(pol: Policy, s: Scenario) -> Policy:
    """Extend a truncated-horizon policy with idle epochs to full shape."""
    i, k = pol.shape
    if i == s.num_epochs:
        return pol
    zeros = ((0.0,) * k,) * (s.num_epochs - i)
    return Policy(power=pol.power + zeros, duration=pol.duration + zeros)
