"""Data model shared by every solver: scenarios, policies and constraint audits.

Units are fixed throughout the package: energy in microjoules, power in
microwatts, time in seconds, data in nats.  Channel gains are stored per
microwatt so that ``gain * power`` is dimensionless.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

AUDIT_TOL = 1e-9

THROUGHPUT = "throughput"
ENERGY = "energy"
TCT = "tct"
_KINDS = (THROUGHPUT, ENERGY, TCT)


class EhschedError(Exception):
    """Base class for library errors."""


class ValidationFailed(EhschedError):
    """A scenario failed validation for the requested problem kind."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(f"{c}: {m}" for c, m in report.errors))


class ShapeMismatch(EhschedError):
    pass


class Infeasible(EhschedError):
    """The requested data cannot be delivered with the harvested energy."""


class NeverFeasible(EhschedError):
    """No deadline within the horizon admits delivery of all data."""


class GainOrderViolation(EhschedError):
    pass


class TooLarge(EhschedError):
    """Instance exceeds the brute-force search budget."""


class StateSpaceTooLarge(EhschedError):
    pass


class NoConvergence(EhschedError):
    """Numerical solver stopped above its residual tolerance."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


def rate(gamma: float, power: float) -> float:
    """Transmission rate in nats per second: 0.5 * ln(1 + gamma * power).

    Requires gamma > 0 and power >= 0.
    """
    return 0.5 * math.log1p(gamma * power)


def _matrix(rows: Iterable[Iterable[float]]) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(x) for x in row) for row in rows)


@dataclass(frozen=True)
class Scenario:
    """Epoch-structured problem input.

    ``gains[i][k]`` is the gain of sub-channel ``k`` during epoch ``i``;
    arrivals ``energy_arrivals[i]`` / ``data_arrivals[i]`` occur at the start
    of epoch ``i`` (the first at t=0).  ``battery_capacity`` may be
    ``math.inf`` for the unbounded-battery problems.
    """

    epoch_durations: tuple[float, ...]
    energy_arrivals: tuple[float, ...]
    data_arrivals: tuple[float, ...]
    gains: tuple[tuple[float, ...], ...]
    processing_cost: float = 0.0
    battery_capacity: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "epoch_durations", tuple(float(x) for x in self.epoch_durations))
        object.__setattr__(self, "energy_arrivals", tuple(float(x) for x in self.energy_arrivals))
        object.__setattr__(self, "data_arrivals", tuple(float(x) for x in self.data_arrivals))
        object.__setattr__(self, "gains", _matrix(self.gains))
        object.__setattr__(self, "processing_cost", float(self.processing_cost))
        object.__setattr__(self, "battery_capacity", float(self.battery_capacity))

    @property
    def num_epochs(self) -> int:
        return len(self.epoch_durations)

    @property
    def num_channels(self) -> int:
        return len(self.gains[0]) if self.gains else 0

    @property
    def deadline(self) -> float:
        return float(sum(self.epoch_durations))

    @property
    def event_times(self) -> tuple[float, ...]:
        """Epoch start times, t_1 = 0."""
        t, out = 0.0, []
        for tau in self.epoch_durations:
            out.append(t)
            t += tau
        return tuple(out)

    @property
    def unbounded_battery(self) -> bool:
        return math.isinf(self.battery_capacity)

    def cumulative_energy(self) -> np.ndarray:
        return np.cumsum(self.energy_arrivals)

    def cumulative_data(self) -> np.ndarray:
        return np.cumsum(self.data_arrivals)

    def with_capacity(self, capacity: float) -> "Scenario":
        return replace(self, battery_capacity=capacity)

    def truncated(self, deadline: float) -> "Scenario":
        """Restrict to [0, deadline); the last kept epoch is shortened."""
        if deadline <= 0:
            raise ValueError("deadline must be positive")
        starts = self.event_times
        keep = [i for i in range(self.num_epochs) if starts[i] < deadline]
        m = keep[-1]
        durations = list(self.epoch_durations[: m + 1])
        durations[m] = min(durations[m], deadline - starts[m])
        return Scenario(
            epoch_durations=durations,
            energy_arrivals=self.energy_arrivals[: m + 1],
            data_arrivals=self.data_arrivals[: m + 1],
            gains=self.gains[: m + 1],
            processing_cost=self.processing_cost,
            battery_capacity=self.battery_capacity,
        )


@dataclass(frozen=True)
class Policy:
    """Per-epoch, per-channel transmission powers and durations.

    In canonical form a cell with zero power also has zero duration; an
    audit of a non-canonical policy charges ``duration * processing_cost``
    even at zero power.
    """

    power: tuple[tuple[float, ...], ...]
    duration: tuple[tuple[float, ...], ...]
    glue_levels: tuple[float, ...] | None = None
    v_star: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "power", _matrix(self.power))
        object.__setattr__(self, "duration", _matrix(self.duration))
        if len(self.power) != len(self.duration) or any(
            len(p) != len(d) for p, d in zip(self.power, self.duration)
        ):
            raise ShapeMismatch("power and duration shapes differ")

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.power), len(self.power[0]) if self.power else 0)

    def power_array(self) -> np.ndarray:
        return np.asarray(self.power, dtype=float)

    def duration_array(self) -> np.ndarray:
        return np.asarray(self.duration, dtype=float)

    def energy_alloc(self) -> np.ndarray:
        """Transmission energy per cell (excludes processing cost)."""
        return self.power_array() * self.duration_array()

    def data_sent(self, scenario: Scenario) -> np.ndarray:
        g = np.asarray(scenario.gains, dtype=float)
        p, th = self.power_array(), self.duration_array()
        return 0.5 * th * np.log1p(g * p)

    def consumption(self, scenario: Scenario) -> np.ndarray:
        """Per-cell drained energy duration*(power + processing_cost)."""
        return self.duration_array() * (self.power_array() + scenario.processing_cost)

    def canonical(self) -> "Policy":
        p, th = self.power_array(), self.duration_array()
        th = np.where(p <= 0.0, 0.0, th)
        p = np.where(th <= 0.0, 0.0, p)
        return replace(self, power=_matrix(p), duration=_matrix(th))

    @staticmethod
    def zeros(num_epochs: int, num_channels: int) -> "Policy":
        row = (0.0,) * num_channels
        return Policy(power=(row,) * num_epochs, duration=(row,) * num_epochs)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: tuple[tuple[str, str], ...] = ()

    def raise_if_failed(self):
        if not self.ok:
            raise ValidationFailed(self)


@dataclass(frozen=True)
class LedgerReport:
    """Constraint ledgers from :func:`audit_policy`.

    ``residual[i]`` is the battery content just after epoch ``i`` finishes
    (before the next arrival); ``violations`` holds
    ``(constraint_id, epoch_index_1based, magnitude)`` triples.
    """

    consumed: tuple[float, ...]
    residual: tuple[float, ...]
    delivered: tuple[float, ...]
    violations: tuple[tuple[str, int, float], ...]
    feasible: bool

    @property
    def total_delivered(self) -> float:
        return self.delivered[-1] if self.delivered else 0.0

    @property
    def final_residual(self) -> float:
        return self.residual[-1] if self.residual else 0.0


def validate_scenario(s: Scenario, kind: str = THROUGHPUT) -> ValidationReport:
    """Check scenario invariants plus the preconditions of a problem kind.

    Throughput assumes a backlogged transmitter (data arrivals ignored);
    the energy and completion-time problems require an unbounded battery.
    """
    errors: list[tuple[str, str]] = []
    if kind not in _KINDS:
        errors.append(("KindMismatch", f"unknown problem kind {kind!r}"))
        return ValidationReport(False, tuple(errors))
    I = s.num_epochs
    if I == 0:
        errors.append(("NonPositiveDuration", "scenario has no epochs"))
        return ValidationReport(False, tuple(errors))
    if len(s.energy_arrivals) != I or len(s.data_arrivals) != I or len(s.gains) != I:
        errors.append(("ShapeMismatch", "arrival/gain lengths differ from epoch count"))
        return ValidationReport(False, tuple(errors))
    K = s.num_channels
    for i, tau in enumerate(s.epoch_durations):
        if not tau > 0:
            errors.append(("NonPositiveDuration", f"epoch {i + 1} duration {tau}"))
    for i, row in enumerate(s.gains):
        if len(row) != K:
            errors.append(("ShapeMismatch", f"gain row {i + 1} has {len(row)} entries"))
            continue
        for k, g in enumerate(row):
            if not g > 0:
                errors.append(("GainNonPositive", f"gain[{i + 1}][{k + 1}] = {g}"))
    if s.processing_cost < 0:
        errors.append(("NegativeProcessingCost", f"{s.processing_cost}"))
    for i, e in enumerate(s.energy_arrivals):
        if e < 0:
            errors.append(("NegativeArrival", f"energy[{i + 1}] = {e}"))
        if e > s.battery_capacity:
            errors.append(
                ("ArrivalExceedsCapacity", f"energy[{i + 1}] = {e} > E_max = {s.battery_capacity}")
            )
    for i, b in enumerate(s.data_arrivals):
        if b < 0:
            errors.append(("NegativeArrival", f"data[{i + 1}] = {b}"))
    if not s.battery_capacity > 0:
        errors.append(("NonPositiveCapacity", f"{s.battery_capacity}"))
    if kind in (ENERGY, TCT) and not s.unbounded_battery:
        errors.append(
            ("KindMismatch", f"{kind} requires an unbounded battery; got E_max = {s.battery_capacity}")
        )
    return ValidationReport(not errors, tuple(errors))


def audit_policy(s: Scenario, pol: Policy, tol: float = AUDIT_TOL,
                 check_data: bool | None = None) -> LedgerReport:
    """Evaluate the causality/overflow/data ledgers of a policy.

    ``check_data`` defaults to auditing data causality only when the
    scenario carries data arrivals (a backlogged throughput scenario has
    none).
    """
    if pol.shape != (s.num_epochs, s.num_channels):
        raise ShapeMismatch(f"policy shape {pol.shape} vs scenario "
                            f"({s.num_epochs}, {s.num_channels})")
    if check_data is None:
        check_data = any(b > 0 for b in s.data_arrivals)
    taus = np.asarray(s.epoch_durations)
    p, th = pol.power_array(), pol.duration_array()
    violations: list[tuple[str, int, float]] = []
    for i in range(s.num_epochs):
        for k in range(s.num_channels):
            if p[i, k] < -tol:
                violations.append(("power_negative", i + 1, -p[i, k]))
            if th[i, k] < -tol:
                violations.append(("duration_negative", i + 1, -th[i, k]))
            if th[i, k] > taus[i] + tol:
                violations.append(("duration_exceeds_epoch", i + 1, th[i, k] - taus[i]))
    cons = (th * (p + s.processing_cost)).sum(axis=1)
    consumed = np.cumsum(cons)
    cum_e = s.cumulative_energy()
    delivered = np.cumsum(pol.data_sent(s).sum(axis=1))
    residual = cum_e - consumed
    cum_b = s.cumulative_data()
    for i in range(s.num_epochs):
        if consumed[i] - cum_e[i] > tol:
            violations.append(("energy_causality", i + 1, consumed[i] - cum_e[i]))
        if not s.unbounded_battery:
            nxt = s.energy_arrivals[i + 1] if i + 1 < s.num_epochs else 0.0
            over = (cum_e[i] + nxt) - consumed[i] - s.battery_capacity
            if over > tol:
                violations.append(("battery_overflow", i + 1, over))
        if check_data and delivered[i] - cum_b[i] > tol:
            violations.append(("data_causality", i + 1, delivered[i] - cum_b[i]))
    return LedgerReport(
        consumed=tuple(consumed),
        residual=tuple(residual),
        delivered=tuple(delivered),
        violations=tuple(violations),
        feasible=not violations,
    )


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    cap: float | str = "inf" if s.unbounded_battery else s.battery_capacity
    return {
        "epochs": [
            {
                "tau_s": s.epoch_durations[i],
                "energy_uJ": s.energy_arrivals[i],
                "data_nats": s.data_arrivals[i],
                "gains_per_uW": list(s.gains[i]),
            }
            for i in range(s.num_epochs)
        ],
        "processing_cost_uW": s.processing_cost,
        "battery_capacity_uJ": cap,
    }


def scenario_from_dict(d: dict) -> Scenario:
    cap = d.get("battery_capacity_uJ", "inf")
    capacity = math.inf if cap in ("inf", None) else float(cap)
    epochs = d["epochs"]
    return Scenario(
        epoch_durations=[e["tau_s"] for e in epochs],
        energy_arrivals=[e.get("energy_uJ", 0.0) for e in epochs],
        data_arrivals=[e.get("data_nats", 0.0) for e in epochs],
        gains=[e["gains_per_uW"] for e in epochs],
        processing_cost=d.get("processing_cost_uW", 0.0),
        battery_capacity=capacity,
    )


def policy_to_dict(pol: Policy) -> dict:
    out = {
        "power_uW": [list(r) for r in pol.power],
        "duration_s": [list(r) for r in pol.duration],
    }
    if pol.glue_levels is not None:
        out["glue_level"] = list(pol.glue_levels)
    if pol.v_star is not None:
        out["v_star"] = [list(r) for r in pol.v_star]
    return out


def policy_from_dict(d: dict) -> Policy:
    glue = d.get("glue_level")
    vs = d.get("v_star")
    return Policy(
        power=d["power_uW"],
        duration=d["duration_s"],
        glue_levels=tuple(glue) if glue is not None else None,
        v_star=_matrix(vs) if vs is not None else None,
    )


def load_scenario(path: str) -> Scenario:
    with open(path) as f:
        return scenario_from_dict(json.load(f))


def save_json(path: str, payload: dict):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
