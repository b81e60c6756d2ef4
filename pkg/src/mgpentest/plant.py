"""Minute-resolution microgrid plant and the hourly control loop.

Routing per minute follows the battery ON/OFF table: with the battery OFF
all surplus is sold and all deficit bought; with it ON surplus charges and
deficit discharges the battery, and whatever the SoC band cannot absorb or
supply goes to the grid at the current minute's price.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

from .dispatch import (ControlPlan, ControllerConfig, CostDiff, build_cost_diff,
                       solve_dispatch_cached)
from .scenario import Scenario, hourly_window


@dataclass(frozen=True)
class BatteryState:
    soc: float
    omega: float


@dataclass(frozen=True)
class MinuteRecord:
    minute: int
    load_kw: float
    solar_kw: float
    command: int
    soc_after: float
    grid_kw: float
    cost_delta: float


@dataclass(frozen=True)
class AttackContext:
    """Read-only view handed to an attacker at the top of each hour."""

    hour: int
    c: float
    d: float
    load_kw: float
    solar_kw: float
    soc: float


Attacker = Callable[[AttackContext, float], float]


@dataclass(frozen=True)
class SimResult:
    trace: tuple[MinuteRecord, ...]
    hourly_costs: tuple[float, ...]
    total_cost: float
    avg_soc: float
    avg_reported_soc: float
    commands: tuple[int, ...]
    reported: tuple[float, ...] = ()
    actual: tuple[float, ...] = ()

    def summary(self) -> str:
        return f"Score: ${self.total_cost:.2f}. Avg Batt Charge: {self.avg_soc:.3f}%"


def step_minute(state: BatteryState, load_kw: float, solar_kw: float, command: int,
                buy: float, sell: float, b_min: float = 75.0, b_max: float = 100.0,
                minute: int = 0):
    """Advance one minute; returns the new state and its ledger entry."""
    soc = state.soc
    energy = (solar_kw - load_kw) / 60.0
    if command:
        if energy >= 0:
            stored = min(energy, (b_max - soc) * state.omega)
            stored = max(stored, 0.0)
            soc = min(soc + stored / state.omega, b_max)
            grid = -(energy - stored)
        else:
            drawn = min(-energy, (soc - b_min) * state.omega)
            drawn = max(drawn, 0.0)
            soc = max(soc - drawn / state.omega, b_min)
            grid = -energy - drawn
    else:
        grid = -energy
    # grid > 0 is energy bought this minute
    cost = grid * buy / 100.0 if grid > 0 else grid * sell / 100.0
    record = MinuteRecord(minute, load_kw, solar_kw, int(command), soc, grid * 60.0, cost)
    return BatteryState(soc, state.omega), record


def simulate_hour(scenario: Scenario, config: ControllerConfig, hour: int, soc: float,
                  command: int, keep_trace: bool = True, offset: float = 0.0):
    """Run 60 minutes of ``hour`` (mod scenario length) under a fixed command.

    Returns ``(soc_after, hourly_cost, soc_sum, reported_sum, records)``. The
    sums run over per-minute values and feed the averages; the reported value
    of a minute is its actual SoC biased by the hour's injected ``offset`` and
    held inside the band.
    """
    start = (hour % scenario.hours) * 60
    load = scenario.load_kw[start:start + 60].tolist()
    solar = scenario.solar_kw[start:start + 60].tolist()
    buy = scenario.buy_price[start:start + 60].tolist()
    sell = scenario.sell_price[start:start + 60].tolist()
    state = BatteryState(soc, config.omega)
    cost = 0.0
    soc_sum = 0.0
    rep_sum = 0.0
    records = []
    base = hour * 60
    for i in range(60):
        state, rec = step_minute(state, load[i], solar[i], command, buy[i], sell[i],
                                 config.b_min, config.b_max, base + i)
        cost = cost + rec.cost_delta
        soc_sum += state.soc
        rep_sum += min(max(state.soc + offset, config.b_min), config.b_max) if offset else state.soc
        if keep_trace:
            records.append(rec)
    return state.soc, cost, soc_sum, rep_sum, records


def hourly_cost_diffs(scenario: Scenario, config: ControllerConfig) -> list[CostDiff]:
    """True (unattacked) cost/difference sets for every scenario hour."""
    return [build_cost_diff(hourly_window(scenario, h, config.T, config.b_min), config)
            for h in range(scenario.hours)]


@dataclass
class MicrogridSim:
    """Hour-by-hour stepping of the control loop; ``run_simulation`` drives it."""

    scenario: Scenario
    config: ControllerConfig
    init_soc: float
    keep_trace: bool = True
    cost_diffs: Optional[list] = None
    solve: Callable[[CostDiff, float, ControllerConfig], ControlPlan] = solve_dispatch_cached
    hour: int = field(init=False, default=0)
    soc: float = field(init=False)

    def __post_init__(self):
        if not self.config.in_band(self.init_soc):
            raise ValueError(f"init_soc {self.init_soc} outside [{self.config.b_min}, {self.config.b_max}]")
        if self.cost_diffs is None:
            self.cost_diffs = hourly_cost_diffs(self.scenario, self.config)
        self.soc = float(self.init_soc)
        self.trace: list[MinuteRecord] = []
        self.hourly_costs: list[float] = []
        self.commands: list[int] = []
        self.reported: list[float] = []
        self.actual: list[float] = []
        self.plans: list[ControlPlan] = []
        self._soc_sum = 0.0
        self._rep_sum = 0.0
        self._minutes = 0
        self._total = 0.0

    def context(self) -> AttackContext:
        h = self.hour % self.scenario.hours
        hv = self.scenario.hourly
        cd = self.cost_diffs[h]
        return AttackContext(self.hour, cd.c[0], cd.d[0], float(hv["load_kw"][h]),
                             float(hv["solar_kw"][h]), self.soc)

    def step(self, reported: float, force_command: Optional[int] = None) -> float:
        """Run one control hour with ``reported`` SoC given to the controller."""
        h = self.hour % self.scenario.hours
        if force_command is None:
            plan = self.solve(self.cost_diffs[h], reported, self.config)
            command = plan.command
            self.plans.append(plan)
        else:
            command = int(force_command)
        self.actual.append(self.soc)
        self.reported.append(float(reported))
        self.commands.append(command)
        soc, cost, soc_sum, rep_sum, records = simulate_hour(
            self.scenario, self.config, self.hour, self.soc, command, self.keep_trace,
            float(reported) - self.soc)
        for rec in records:
            self._total = self._total + rec.cost_delta
        if not self.keep_trace:
            self._total = self._total + cost
        self.trace.extend(records)
        self.hourly_costs.append(cost)
        self._soc_sum += soc_sum
        self._rep_sum += rep_sum
        self._minutes += 60
        self.soc = soc
        self.hour += 1
        return cost

    def result(self) -> SimResult:
        n = self._minutes
        return SimResult(
            trace=tuple(self.trace),
            hourly_costs=tuple(self.hourly_costs),
            total_cost=self._total,
            avg_soc=self._soc_sum / n if n else self.soc,
            avg_reported_soc=self._rep_sum / n if n else self.soc,
            commands=tuple(self.commands),
            reported=tuple(self.reported),
            actual=tuple(self.actual),
        )


def run_simulation(scenario: Scenario, config: ControllerConfig, init_soc: float,
                   attacker: Optional[Attacker] = None, hours: Optional[int] = None,
                   force_off: bool = False, cost_diffs=None,
                   solve=solve_dispatch_cached) -> SimResult:
    """Hourly control loop: observe, (optionally) spoof, dispatch, run 60 minutes."""
    sim = MicrogridSim(scenario, config, init_soc, cost_diffs=cost_diffs, solve=solve)
    for _ in range(scenario.hours if hours is None else hours):
        b = sim.soc
        reported = attacker(sim.context(), b) if attacker is not None else b
        sim.step(reported, force_command=0 if force_off else None)
    return sim.result()


def baseline_all_off(scenario: Scenario, config: ControllerConfig, init_soc: float,
                     hours: Optional[int] = None) -> SimResult:
    return run_simulation(scenario, config, init_soc, hours=hours, force_off=True)


TRACE_HEADER = ("minute", "load_kw", "solar_kw", "command", "soc", "grid_kw", "cost_delta")


def write_trace(result: SimResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in result.trace:
            w.writerow([r.minute, repr(r.load_kw), repr(r.solar_kw), r.command,
                        repr(r.soc_after), repr(r.grid_kw), repr(r.cost_delta)])
