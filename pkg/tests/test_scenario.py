import numpy as np
import pytest

from mgpentest.scenario import (MINUTES_PER_DAY, Scenario, ScenarioError, TouSchedule,
                                bundled_scenario, hourly_window, load_scenario,
                                load_scenario_dir, save_scenario, synth_scenario, tou_price_at)


def test_tou_bands():
    tou = TouSchedule()
    assert tou_price_at(tou, 0) == (6.5, 5.0)
    assert tou_price_at(tou, 6 * 60 + 59)[0] == 6.5
    assert tou_price_at(tou, 7 * 60)[0] == 9.4
    assert tou_price_at(tou, 12 * 60)[0] == 13.4
    assert tou_price_at(tou, 16 * 60 + 59)[0] == 13.4
    assert tou_price_at(tou, 17 * 60)[0] == 9.4
    assert tou_price_at(tou, 19 * 60)[0] == 6.5
    with pytest.raises(ScenarioError):
        tou_price_at(tou, MINUTES_PER_DAY)


def test_tou_rejects_nonpositive_price():
    with pytest.raises(ScenarioError):
        TouSchedule(sell=0.0)


def test_prices_repeat_daily():
    sc = synth_scenario(days=2)
    assert np.array_equal(sc.buy_price[:MINUTES_PER_DAY], sc.buy_price[MINUTES_PER_DAY:])
    assert np.all(sc.sell_price == 5.0)


def test_scenario_validation():
    ok = np.ones(60)
    with pytest.raises(ScenarioError, match="multiple of 60"):
        Scenario.from_power(np.ones(61), np.ones(61))
    with pytest.raises(ScenarioError, match="length mismatch"):
        Scenario.from_power(ok, np.ones(120))
    with pytest.raises(ScenarioError, match="non-negative"):
        Scenario.from_power(-ok, ok)
    with pytest.raises(ScenarioError, match="non-finite"):
        Scenario.from_power(np.full(60, np.nan), ok)


def test_scenario_arrays_read_only():
    sc = synth_scenario(days=1)
    with pytest.raises(ValueError):
        sc.load_kw[0] = 1.0


def test_hourly_means():
    load = np.repeat(np.arange(3.0), 60)
    sc = Scenario.from_power(load, np.zeros(180))
    assert sc.hourly["load_kw"].tolist() == [0.0, 1.0, 2.0]


def test_hourly_window_wraps():
    load = np.repeat(np.arange(3.0), 60)
    sc = Scenario.from_power(load, np.zeros(180))
    w = hourly_window(sc, 2, 4, 80.0)
    assert w.load_kw == (2.0, 0.0, 1.0, 2.0)
    assert w.T == 4 and w.b == 80.0
    with pytest.raises(ScenarioError):
        hourly_window(sc, 3, 4, 80.0)


def test_csv_round_trip(tmp_path):
    sc = synth_scenario(seed=3, days=1)
    save_scenario(sc, tmp_path)
    back = load_scenario_dir(tmp_path)
    assert back.equals(sc)


def _write(path, text):
    path.write_text(text)
    return path


def test_csv_errors_name_the_row(tmp_path):
    solar = _write(tmp_path / "solar.csv", "minute,solar_kw\n" + "".join(f"{i},0\n" for i in range(60)))
    bad_header = _write(tmp_path / "h.csv", "t,load_kw\n0,1\n")
    with pytest.raises(ScenarioError, match="row 1"):
        load_scenario(bad_header, solar)
    neg = _write(tmp_path / "n.csv", "minute,load_kw\n0,1\n1,-2\n")
    with pytest.raises(ScenarioError, match="row 3"):
        load_scenario(neg, solar)
    gap = _write(tmp_path / "g.csv", "minute,load_kw\n0,1\n2,1\n")
    with pytest.raises(ScenarioError, match="expected minute 1"):
        load_scenario(gap, solar)
    junk = _write(tmp_path / "j.csv", "minute,load_kw\n0,abc\n")
    with pytest.raises(ScenarioError, match="row 2"):
        load_scenario(junk, solar)
    short = _write(tmp_path / "s.csv", "minute,load_kw\n" + "".join(f"{i},1\n" for i in range(120)))
    with pytest.raises(ScenarioError, match="length mismatch"):
        load_scenario(short, solar)
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "missing.csv", solar)


def test_synth_deterministic_and_seeded():
    a, b = synth_scenario(seed=11), synth_scenario(seed=11)
    assert a.equals(b)
    assert not a.equals(synth_scenario(seed=12))
    with pytest.raises(ScenarioError):
        synth_scenario(days=0)


@pytest.mark.parametrize("seed", [0, 7, 42])
def test_synth_shape(seed):
    sc = synth_scenario(seed=seed, days=2)
    t = (np.arange(sc.minutes) % MINUTES_PER_DAY) / 60.0
    night = (t < 5.5) | (t >= 20.5)
    assert np.all(sc.solar_kw[night] == 0.0)
    midday = (t >= 11) & (t < 14)
    evening = (t >= 16.5) & (t < 19.5)
    assert sc.load_kw[evening].max() > sc.load_kw[midday].max()
    assert sc.solar_kw[midday].mean() > sc.load_kw[midday].mean()


def test_bundled_matches_generator():
    assert bundled_scenario().equals(synth_scenario(7, 2))
