"""False data injection on the reported battery SoC, and grid-search reference attacks.

The attacker adds an offset ``a_b`` to the true SoC before the controller sees
it. Offsets outside the attacker's box or the SoC band are clamped. Two
exhaustive references are provided:

* ``oracle_attack_step`` maximises the controller's own optimal objective for
  one window (attacker-over-controller, single step);
* ``oracle_attack_horizon`` maximises the realised plant cost over a run of
  hours by searching every offset sequence on the grid.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Optional

from .dispatch import ControllerConfig, CostDiff, build_cost_diff, solve_dispatch_cached
from .plant import SimResult, hourly_cost_diffs, run_simulation, simulate_hour
from .scenario import Scenario, StateWindow

HORIZON_LIMIT = 10 ** 6
_DEDUP_TOL = 1e-9


class AttackMode(enum.Enum):
    FULL_RANGE = "full"
    RELATIVE_5PCT = "pct5"


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class AttackBounds:
    a_min: float = -100.0
    a_max: float = 100.0
    mode: AttackMode = AttackMode.FULL_RANGE

    def __post_init__(self):
        if not self.a_min <= 0 <= self.a_max:
            raise OracleError(f"need a_min <= 0 <= a_max, got [{self.a_min}, {self.a_max}]")

    @classmethod
    def full_range(cls) -> "AttackBounds":
        return cls()

    @classmethod
    def relative_5pct(cls) -> "AttackBounds":
        return cls(mode=AttackMode.RELATIVE_5PCT)

    @classmethod
    def for_mode(cls, mode: str | AttackMode, a_min: float = -100.0, a_max: float = 100.0):
        return cls(a_min, a_max, AttackMode(mode))


@dataclass(frozen=True)
class FdiAction:
    a_b: float


def feasible_interval(b: float, bounds: AttackBounds, config: ControllerConfig) -> tuple[float, float]:
    """Offsets allowed at true SoC ``b``: the box, the mode rule and the SoC band."""
    lo = max(bounds.a_min, config.b_min - b)
    hi = min(bounds.a_max, config.b_max - b)
    if bounds.mode is AttackMode.RELATIVE_5PCT:
        lo = max(lo, -0.05 * b)
        hi = min(hi, 0.05 * b)
    # b within the band (up to rounding) always admits a_b = 0
    return min(lo, 0.0), max(hi, 0.0)


def apply_fdi(b: float, action, bounds: AttackBounds, config: ControllerConfig) -> float:
    a = action.a_b if isinstance(action, FdiAction) else float(action)
    lo, hi = feasible_interval(b, bounds, config)
    a = min(max(a, lo), hi)
    return min(max(b + a, config.b_min), config.b_max)


def attack_grid(lo: float, hi: float, step: float) -> list[float]:
    """Offsets ``lo, lo+step, ..., hi`` plus 0, ordered by |a| then value."""
    if not (step > 0 and math.isfinite(step)):
        raise OracleError(f"grid step must be positive, got {step}")
    n = int(math.floor((hi - lo) / step + _DEDUP_TOL))
    pts = [lo + k * step for k in range(n + 1)]
    pts += [hi, 0.0]
    out: list[float] = []
    for p in sorted(pts, key=lambda v: (abs(v), v)):
        if all(abs(p - q) > _DEDUP_TOL for q in out):
            out.append(p)
    return out


def max_grid_points(bounds: AttackBounds, config: ControllerConfig, step: float) -> int:
    width = min(bounds.a_max - bounds.a_min, config.b_max - config.b_min)
    if bounds.mode is AttackMode.RELATIVE_5PCT:
        width = min(width, 0.1 * config.b_max)
    ratio = width / step
    n = int(math.floor(ratio + _DEDUP_TOL)) + 1
    if abs(ratio - round(ratio)) > _DEDUP_TOL:
        n += 1
    return n + 1


def _best_offset(cd: CostDiff, b: float, bounds: AttackBounds, config: ControllerConfig,
                 grid_step: float, cache: Optional[dict] = None):
    lo, hi = feasible_interval(b, bounds, config)
    best_a, best_obj = None, -math.inf
    for a in attack_grid(lo, hi, grid_step):
        b_att = apply_fdi(b, a, bounds, config)
        key = b_att
        if cache is not None and key in cache:
            obj = cache[key]
        else:
            obj = solve_dispatch_cached(cd, b_att, config).objective
            if cache is not None:
                cache[key] = obj
        # grid is ordered by |a|, so strict improvement keeps the smaller offset on ties
        if obj > best_obj:
            best_a, best_obj = a, obj
    return best_a, best_obj


def oracle_attack_step(window: StateWindow, bounds: AttackBounds, config: ControllerConfig,
                       grid_step: float = 0.5) -> tuple[float, float]:
    """Offset maximising the controller's optimal objective for one window."""
    cd = build_cost_diff(window, config)
    return _best_offset(cd, window.b, bounds, config, grid_step)


@dataclass(frozen=True)
class OracleRun:
    actions: tuple[float, ...]
    cost: float
    result: SimResult


def _replay(scenario, config, init_soc, bounds, actions, cost_diffs) -> SimResult:
    def attacker(ctx, b):
        return apply_fdi(b, actions[ctx.hour], bounds, config)

    return run_simulation(scenario, config, init_soc, attacker=attacker, hours=len(actions),
                          cost_diffs=cost_diffs)


def oracle_attack_greedy(scenario: Scenario, config: ControllerConfig, init_soc: float,
                         bounds: AttackBounds, grid_step: float = 0.5,
                         hours: Optional[int] = None) -> OracleRun:
    """Apply the step oracle every hour on the true window and simulate."""
    hours = scenario.hours if hours is None else hours
    cds = hourly_cost_diffs(scenario, config)
    caches: dict[int, dict] = {}
    actions: list[float] = []

    def attacker(ctx, b):
        h = ctx.hour % scenario.hours
        a, _ = _best_offset(cds[h], b, bounds, config, grid_step, caches.setdefault(h, {}))
        actions.append(a)
        return apply_fdi(b, a, bounds, config)

    result = run_simulation(scenario, config, init_soc, attacker=attacker, hours=hours,
                            cost_diffs=cds)
    return OracleRun(tuple(actions), result.total_cost, result)


def oracle_attack_horizon(scenario: Scenario, config: ControllerConfig, init_soc: float,
                          bounds: AttackBounds, grid_step: float = 0.5, hours: int = 4,
                          limit: int = HORIZON_LIMIT) -> OracleRun:
    """Exhaustive search over offset sequences maximising simulated cost.

    Every sequence on the per-hour grids is covered; sub-trees reached with an
    identical (hour, SoC) plant state are evaluated once since their futures
    coincide. Ties go to the sequence with smaller offsets, hour by hour.
    """
    if not (grid_step > 0 and math.isfinite(grid_step)):
        raise OracleError(f"grid step must be positive, got {grid_step}")
    if hours < 0 or hours > scenario.hours:
        raise OracleError(f"hours must lie in [0, {scenario.hours}], got {hours}")
    npts = max_grid_points(bounds, config, grid_step)
    if npts ** hours > limit:
        raise OracleError(
            f"search space {npts}^{hours} exceeds the limit of {limit} sequences; "
            "coarsen --grid or reduce --hours"
        )
    cds = hourly_cost_diffs(scenario, config)
    commands: dict[tuple[int, float], int] = {}
    memo: dict[tuple[int, float], tuple[float, tuple[float, ...]]] = {}

    def command_for(h, b_rep):
        key = (h, b_rep)
        if key not in commands:
            commands[key] = solve_dispatch_cached(cds[h % scenario.hours], b_rep, config).command
        return commands[key]

    def best_from(k, soc):
        if k == hours:
            return 0.0, ()
        key = (k, soc)
        if key in memo:
            return memo[key]
        lo, hi = feasible_interval(soc, bounds, config)
        best = (-math.inf, ())
        for a in attack_grid(lo, hi, grid_step):
            cmd = command_for(k, apply_fdi(soc, a, bounds, config))
            soc_next, cost, _, _, _ = simulate_hour(scenario, config, k, soc, cmd, keep_trace=False)
            future, tail = best_from(k + 1, soc_next)
            total = cost + future
            if total > best[0]:
                best = (total, (a,) + tail)
        memo[key] = best
        return best

    _, actions = best_from(0, float(init_soc))
    result = _replay(scenario, config, init_soc, bounds, actions, cds)
    return OracleRun(actions, result.total_cost, result)


ORACLE_HEADER = ("hour", "a_b", "b_reported", "b_actual", "hourly_cost")


def write_oracle_report(run: OracleRun, path) -> None:
    res = run.result
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ORACLE_HEADER)
        for k, (a, rep, act, cost) in enumerate(zip(run.actions, res.reported, res.actual,
                                                    res.hourly_costs)):
            w.writerow([k, repr(a), repr(rep), repr(act), repr(cost)])
