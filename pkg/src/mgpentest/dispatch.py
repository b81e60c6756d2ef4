"""Hourly battery dispatch controller.

The controller turns a forecast window into per-step costs ``c`` and SoC
increments ``d`` and then picks binary battery commands minimising the cost
paid while the battery is OFF, subject to the SoC band. ``solve_dispatch``
is an exact depth-first branch-and-bound; ``enumerate_dispatch`` checks it by
brute force.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .scenario import StateWindow

SOC_TOL = 1e-9
ENUMERATION_LIMIT = 20


class DispatchError(ValueError):
    pass


@dataclass(frozen=True)
class ControllerConfig:
    T: int = 24
    delta_tau: float = 1.0
    b_min: float = 75.0
    b_max: float = 100.0
    omega: float = 0.2  # kWh per SoC percentage point (20 kWh battery)

    def __post_init__(self):
        if self.T < 1:
            raise DispatchError("T must be >= 1")
        if not self.delta_tau > 0:
            raise DispatchError("delta_tau must be positive")
        if not 0 <= self.b_min < self.b_max <= 100:
            raise DispatchError(f"invalid SoC band [{self.b_min}, {self.b_max}]")
        if not self.omega > 0:
            raise DispatchError("omega must be positive")

    def in_band(self, b: float) -> bool:
        return self.b_min - SOC_TOL <= b <= self.b_max + SOC_TOL


@dataclass(frozen=True)
class CostDiff:
    c: tuple[float, ...]
    d: tuple[float, ...]

    @property
    def T(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class ControlPlan:
    y: tuple[int, ...]
    ybar: tuple[int, ...]
    soc: tuple[float, ...]
    objective: float

    @property
    def command(self) -> int:
        return self.y[0]


def build_cost_diff(window: StateWindow, config: ControllerConfig) -> CostDiff:
    if window.T != config.T:
        raise DispatchError(f"window length {window.T} != T={config.T}")
    c, d = [], []
    for pv, load, buy, sell in zip(window.solar_kw, window.load_kw, window.buy, window.sell):
        e = pv - load
        c.append(-sell * e if e >= 0 else -buy * e)
        d.append(e / config.omega)
    return CostDiff(tuple(c), tuple(d))


def plan_from_commands(y, cd: CostDiff, b: float, config: ControllerConfig) -> ControlPlan:
    """Materialise a plan; SoC and objective accumulate in step order."""
    soc, b_t, obj = [], b, 0.0
    for y_t, c_t, d_t in zip(y, cd.c, cd.d):
        if y_t:
            b_t = b_t + d_t * config.delta_tau
        else:
            obj = obj + c_t
        soc.append(b_t)
    y = tuple(int(v) for v in y)
    return ControlPlan(y, tuple(1 - v for v in y), tuple(soc), obj)


def plan_is_feasible(plan: ControlPlan, b: float, cd: CostDiff, config: ControllerConfig) -> bool:
    prev = b
    for y_t, yb_t, c_t, d_t, b_t in zip(plan.y, plan.ybar, cd.c, cd.d, plan.soc):
        if y_t + yb_t != 1:
            return False
        if b_t != prev + y_t * d_t * config.delta_tau:
            return False
        if not config.in_band(b_t):
            return False
        prev = b_t
    return True


def _check_inputs(cd: CostDiff, b: float, config: ControllerConfig):
    if cd.T != config.T or len(cd.d) != cd.T:
        raise DispatchError(f"cost/difference length {cd.T} != T={config.T}")
    if not config.in_band(b):
        raise DispatchError(f"initial SoC {b} outside [{config.b_min}, {config.b_max}]")


def _suffix_bounds(c, d, dt):
    """Per-depth data for the fractional energy relaxation.

    For the steps ``t..T-1`` the ON decision either saves cost while drawing
    energy (deficit), costs revenue while storing energy (surplus), or is a
    pure win/loss. Dropping step order, the upper SoC limit and integrality
    leaves a fractional problem whose optimum bounds the achievable saving.
    """
    T = len(c)
    out = []
    for t in range(T):
        base = 0.0
        free_energy = 0.0
        free_saving = 0.0
        deficits, surpluses = [], []
        for k in range(t, T):
            ck, dk = c[k], d[k] * dt
            base += ck
            if ck > 0 and dk >= 0:
                free_saving += ck
                free_energy += dk
            elif ck > 0:
                deficits.append((ck / -dk, -dk))
            elif dk > 0:
                if ck == 0:
                    free_energy += dk
                else:
                    surpluses.append((-ck / dk, dk))
        deficits.sort(reverse=True)
        surpluses.sort()
        out.append((base, free_energy, free_saving, deficits, surpluses))
    out.append((0.0, 0.0, 0.0, [], []))
    return out


def _relaxed_min_cost(entry, headroom: float) -> float:
    base, free_energy, free_saving, deficits, surpluses = entry
    saving = free_saving
    energy = max(headroom, 0.0) + free_energy
    j = 0
    s_left = surpluses[0][1] if surpluses else 0.0
    for value, need in deficits:
        take = min(need, energy)
        saving += value * take
        energy -= take
        need -= take
        while need > 0 and j < len(surpluses) and surpluses[j][0] < value:
            bought = min(need, s_left)
            saving += (value - surpluses[j][0]) * bought
            need -= bought
            s_left -= bought
            if s_left <= 0:
                j += 1
                s_left = surpluses[j][1] if j < len(surpluses) else 0.0
        if energy <= 0 and (j >= len(surpluses) or surpluses[j][0] >= value):
            break
    return base - saving


def solve_dispatch(cd: CostDiff, b: float, config: ControllerConfig) -> ControlPlan:
    """Exact minimum-cost plan by depth-first branch-and-bound.

    Ties on the objective go to the plan with fewer ON commands, then to the
    lexicographically smallest command string.
    """
    _check_inputs(cd, b, config)
    T = cd.T
    c, d, dt = cd.c, cd.d, config.delta_tau
    step = [dk * dt for dk in d]
    lo, hi = config.b_min - SOC_TOL, config.b_max + SOC_TOL
    bounds = _suffix_bounds(c, d, dt)
    tol = 1e-9 * (1.0 + sum(abs(x) for x in c))

    # all-OFF is always feasible and seeds the incumbent
    best_obj = 0.0
    for ct in c:
        best_obj = best_obj + ct
    best_key = (best_obj, 0, (0,) * T)
    y = [0] * T

    def dfs(t, soc, partial, n_on):
        nonlocal best_key
        if t == T:
            key = (partial, n_on, tuple(y))
            if key < best_key:
                best_key = key
            return
        if partial + _relaxed_min_cost(bounds[t], soc - config.b_min + SOC_TOL) > best_key[0] + tol:
            return
        on_soc = soc + step[t]
        on_ok = lo <= on_soc <= hi
        order = (1, 0) if c[t] > 0 else (0, 1)
        for choice in order:
            if choice:
                if on_ok:
                    y[t] = 1
                    dfs(t + 1, on_soc, partial, n_on + 1)
                    y[t] = 0
            else:
                dfs(t + 1, soc, partial + c[t], n_on)

    dfs(0, float(b), 0.0, 0)
    return plan_from_commands(best_key[2], cd, float(b), config)


def enumerate_dispatch(cd: CostDiff, b: float, config: ControllerConfig) -> ControlPlan:
    """Brute-force reference over all 2**T command strings (T <= 20)."""
    if config.T > ENUMERATION_LIMIT or cd.T > ENUMERATION_LIMIT:
        raise DispatchError(f"enumeration limited to T <= {ENUMERATION_LIMIT}, got {cd.T}")
    _check_inputs(cd, b, config)
    T = cd.T
    # row i holds the bits of i, most significant first => row order is lexicographic
    idx = np.arange(2 ** T, dtype=np.int64)
    Y = ((idx[:, None] >> np.arange(T - 1, -1, -1)) & 1).astype(np.int8)
    soc = np.full(len(idx), float(b))
    obj = np.zeros(len(idx))
    feasible = np.ones(len(idx), dtype=bool)
    lo, hi = config.b_min - SOC_TOL, config.b_max + SOC_TOL
    for t in range(T):
        on = Y[:, t] == 1
        soc = np.where(on, soc + cd.d[t] * config.delta_tau, soc)
        obj = np.where(on, obj, obj + cd.c[t])
        feasible &= (soc >= lo) & (soc <= hi)
    cand = np.flatnonzero(feasible)
    n_on = Y[cand].sum(axis=1)
    # lexsort: last key is primary
    order = np.lexsort((cand, n_on, obj[cand]))
    best = cand[order[0]]
    return plan_from_commands(Y[best].tolist(), cd, float(b), config)


class DispatchTable:
    """Optimal plans of one window for every initial SoC in the band.

    Built by a backward pass over steps: the cost-to-go is piecewise constant
    in SoC, so each stage is a merge of the next stage's pieces with their
    copy shifted by the step's SoC increment. Ties resolve with the same key
    as ``solve_dispatch``.
    """

    def __init__(self, cd: CostDiff, config: ControllerConfig):
        if cd.T != config.T:
            raise DispatchError(f"cost/difference length {cd.T} != T={config.T}")
        self.cd, self.config = cd, config
        lo, hi = config.b_min - SOC_TOL, config.b_max + SOC_TOL
        xs, keys = [lo, hi], [(0.0, 0, ())]
        for t in range(cd.T - 1, -1, -1):
            c, step = cd.c[t], cd.d[t] * config.delta_tau
            on_lo, on_hi = max(lo, lo - step), min(hi, hi - step)
            pts = set(xs)
            if on_lo < on_hi:
                pts.update(x - step for x in xs if on_lo < x - step < on_hi)
                pts.update((on_lo, on_hi))
            pts = sorted(p for p in pts if lo <= p <= hi)
            new_xs, new_keys = [pts[0]], []
            last = len(keys) - 1
            for p, q in zip(pts, pts[1:]):
                if not p < q:
                    continue
                # midpoints keep lookups off the float-rounded breakpoints
                mid = 0.5 * (p + q)
                k_off = keys[min(bisect.bisect_right(xs, mid) - 1, last)]
                best = (c + k_off[0], k_off[1], (0,) + k_off[2])
                s_on = mid + step
                if lo <= s_on <= hi:
                    k_on = keys[min(bisect.bisect_right(xs, s_on) - 1, last)]
                    on = (k_on[0], k_on[1] + 1, (1,) + k_on[2])
                    if on < best:
                        best = on
                if new_keys and new_keys[-1][2] == best[2]:
                    new_xs[-1] = q
                else:
                    new_keys.append(best)
                    new_xs.append(q)
            xs, keys = new_xs, new_keys
        self.breaks = xs
        self.commands = [k[2] for k in keys]

    def __len__(self):
        return len(self.commands)

    def plan(self, b: float) -> ControlPlan:
        _check_inputs(self.cd, b, self.config)
        i = min(max(bisect.bisect_right(self.breaks, b) - 1, 0), len(self.commands) - 1)
        plan = plan_from_commands(self.commands[i], self.cd, float(b), self.config)
        if not plan_is_feasible(plan, float(b), self.cd, self.config):
            # b sits on a rounded breakpoint; defer to the search
            return solve_dispatch(self.cd, b, self.config)
        return plan


@lru_cache(maxsize=4096)
def dispatch_table(cd: CostDiff, config: ControllerConfig) -> DispatchTable:
    return DispatchTable(cd, config)


def solve_dispatch_cached(cd: CostDiff, b: float, config: ControllerConfig) -> ControlPlan:
    """Same plans as ``solve_dispatch``, answered from a per-window table."""
    return dispatch_table(cd, config).plan(b)


def control_step(window: StateWindow, config: ControllerConfig) -> tuple[int, ControlPlan]:
    plan = solve_dispatch(build_cost_diff(window, config), window.b, config)
    return plan.command, plan
