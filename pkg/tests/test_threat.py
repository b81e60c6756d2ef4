import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgpentest.dispatch import (ControllerConfig, CostDiff, build_cost_diff, enumerate_dispatch,
                                solve_dispatch)
from mgpentest.plant import run_simulation, simulate_hour
from mgpentest.scenario import StateWindow, hourly_window
from mgpentest.threat import (AttackBounds, AttackMode, FdiAction, OracleError, apply_fdi,
                              attack_grid, feasible_interval, max_grid_points,
                              oracle_attack_greedy, oracle_attack_horizon, oracle_attack_step,
                              write_oracle_report)

FULL = AttackBounds.full_range()
PCT5 = AttackBounds.relative_5pct()


def test_apply_fdi_examples(config):
    assert apply_fdi(83.2, FdiAction(0.0), FULL, config) == 83.2
    assert apply_fdi(80.0, FdiAction(-20.0), FULL, config) == 75.0
    assert apply_fdi(80.0, FdiAction(-10.0), PCT5, config) == 76.0
    assert apply_fdi(98.0, 10.0, FULL, config) == 100.0


@settings(max_examples=300, deadline=None)
@given(st.floats(75, 100), st.floats(-500, 500), st.sampled_from([FULL, PCT5]),
       st.floats(-30, 0), st.floats(0, 30))
def test_apply_fdi_always_feasible(b, a, bounds, a_min, a_max):
    cfg = ControllerConfig()
    for bd in (bounds, AttackBounds(a_min, a_max, bounds.mode)):
        rep = apply_fdi(b, a, bd, cfg)
        assert cfg.b_min <= rep <= cfg.b_max
        assert bd.a_min - 1e-9 <= rep - b <= bd.a_max + 1e-9
        if bd.mode is AttackMode.RELATIVE_5PCT:
            assert abs(rep - b) <= 0.05 * b + 1e-9


def test_feasible_interval(config):
    assert feasible_interval(80.0, FULL, config) == (-5.0, 20.0)
    assert feasible_interval(80.0, PCT5, config) == (-4.0, 4.0)
    assert feasible_interval(100.0, PCT5, config) == (-5.0, 0.0)


def test_bounds_validation():
    with pytest.raises(OracleError):
        AttackBounds(1.0, 5.0)
    assert AttackBounds.for_mode("pct5").mode is AttackMode.RELATIVE_5PCT


def test_attack_grid():
    assert attack_grid(-5.0, 5.0, 5.0) == [0.0, -5.0, 5.0]
    g = attack_grid(-1.2, 1.0, 0.5)
    assert g[0] == 0.0 and -1.2 in g and 1.0 in g
    assert len(g) == len(set(g))
    assert attack_grid(0.0, 0.0, 0.5) == [0.0]
    with pytest.raises(OracleError):
        attack_grid(-1.0, 1.0, 0.0)


def test_max_grid_points_bounds_actual_grids(config):
    for step in (0.5, 0.7, 5.0, 25.0):
        n = max_grid_points(FULL, config, step)
        for b in (75.0, 80.3, 87.5, 100.0):
            lo, hi = feasible_interval(b, FULL, config)
            assert len(attack_grid(lo, hi, step)) <= n


EXAMPLE_CD = CostDiff((-60.0, -20.0, 140.0, 500.0), (6.0, 2.0, -7.0, -25.0))
EXAMPLE_CFG = ControllerConfig(T=4, omega=10.0)


def _window_for(cd, cfg, b):
    # reconstruct a window whose cost/difference sets equal ``cd``
    load, pv, buy, sell = [], [], [], []
    for c, d in zip(cd.c, cd.d):
        e = d * cfg.omega
        load.append(max(-e, 0.0))
        pv.append(max(e, 0.0))
        buy.append(c / -e if e < 0 else 1.0)
        sell.append(-c / e if e > 0 else 1.0)
    return StateWindow(tuple(load), tuple(pv), tuple(buy), tuple(sell), b)


def test_step_oracle_example_window():
    w = _window_for(EXAMPLE_CD, EXAMPLE_CFG, 90.0)
    assert build_cost_diff(w, EXAMPLE_CFG) == EXAMPLE_CD
    a, obj = oracle_attack_step(w, FULL, EXAMPLE_CFG, grid_step=1.0)
    by_report = {b: enumerate_dispatch(EXAMPLE_CD, float(b), EXAMPLE_CFG).objective for b in range(75, 101)}
    # reporting 75 forces charging at steps 1-2 before the step-3 discharge
    assert by_report[90] == 420.0 and by_report[75] == 500.0
    assert obj == max(by_report.values()) == 500.0
    assert a == -15.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6).flatmap(lambda T: st.tuples(
    st.lists(st.floats(-50, 50), min_size=T, max_size=T),
    st.lists(st.floats(-8, 8), min_size=T, max_size=T))), st.floats(75, 100))
def test_step_oracle_is_grid_maximum(cd_lists, b):
    c, _ = cd_lists
    cfg = ControllerConfig(T=len(c), omega=1.0)
    w = _window_for(CostDiff(*map(tuple, cd_lists)), cfg, b)
    cd = build_cost_diff(w, cfg)
    a, obj = oracle_attack_step(w, FULL, cfg, grid_step=2.5)
    lo, hi = feasible_interval(b, FULL, cfg)
    objs = [enumerate_dispatch(cd, apply_fdi(b, x, FULL, cfg), cfg).objective
            for x in attack_grid(lo, hi, 2.5)]
    assert obj == max(objs)
    assert obj >= solve_dispatch(cd, b, cfg).objective
    # widening the box cannot lower the maximum
    assert oracle_attack_step(w, AttackBounds(-2.5, 2.5), cfg, 2.5)[1] <= obj


def test_degenerate_grid_matches_no_attack(scenario, config):
    zero = AttackBounds(0.0, 0.0)
    base = run_simulation(scenario, config, 90.0, hours=6)
    assert oracle_attack_horizon(scenario, config, 90.0, zero, 0.5, hours=6).cost == base.total_cost
    assert oracle_attack_greedy(scenario, config, 90.0, zero, 0.5, hours=6).cost == base.total_cost


def _brute_force_horizon(scenario, config, init, offsets, hours):
    """Independent check: simulate every offset sequence hour by hour."""
    best = None
    for seq in itertools.product(offsets, repeat=hours):
        soc, total = init, 0.0
        for h, a in enumerate(seq):
            lo = max(-100.0, config.b_min - soc)
            hi = min(100.0, config.b_max - soc)
            rep = min(max(soc + min(max(a, lo), hi), config.b_min), config.b_max)
            cd = build_cost_diff(hourly_window(scenario, h, config.T, config.b_min), config)
            cmd = solve_dispatch(cd, rep, config).y[0]
            soc, cost, _, _, _ = simulate_hour(scenario, config, h, soc, cmd, keep_trace=False)
            total += cost
        if best is None or total > best[0]:
            best = (total, seq)
    return best


def test_horizon_matches_brute_force(scenario, config):
    bounds = AttackBounds(-5.0, 5.0)
    run = oracle_attack_horizon(scenario, config, 90.0, bounds, grid_step=5.0, hours=4)
    cost, _ = _brute_force_horizon(scenario, config, 90.0, (-5.0, 0.0, 5.0), 4)
    assert run.cost == pytest.approx(cost, rel=1e-12, abs=1e-12)


def test_horizon_dominates_fixed_sequences(scenario, config):
    run = oracle_attack_horizon(scenario, config, 85.0, FULL, grid_step=12.5, hours=3)
    base = run_simulation(scenario, config, 85.0, hours=3)
    assert run.cost >= base.total_cost
    for a in (-12.5, 12.5):
        fixed = run_simulation(scenario, config, 85.0, hours=3,
                               attacker=lambda ctx, b, a=a: apply_fdi(b, a, FULL, config))
        assert run.cost >= fixed.total_cost - 1e-12


def test_horizon_guard(scenario, config):
    with pytest.raises(OracleError, match="1000000"):
        oracle_attack_horizon(scenario, config, 90.0, FULL, grid_step=0.5, hours=8)
    with pytest.raises(OracleError):
        oracle_attack_horizon(scenario, config, 90.0, FULL, grid_step=5.0, hours=scenario.hours + 1)


def test_greedy_lowers_reported_soc(scenario, config):
    run = oracle_attack_greedy(scenario, config, 95.0, FULL, 0.5, hours=24)
    assert run.result.avg_reported_soc < run.result.avg_soc
    base = run_simulation(scenario, config, 95.0, hours=24)
    assert run.cost > base.total_cost


def test_oracle_determinism_and_report(tmp_path, scenario, config):
    a = oracle_attack_horizon(scenario, config, 90.0, FULL, 25.0, 4)
    b = oracle_attack_horizon(scenario, config, 90.0, FULL, 25.0, 4)
    assert a == b
    write_oracle_report(a, tmp_path / "o.csv")
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "hour,a_b,b_reported,b_actual,hourly_cost"
    assert len(lines) == 5
