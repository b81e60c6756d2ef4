"""Exogenous microgrid data: minute series of load, solar and tariff prices.

Scenarios are read from (and written to) a directory holding ``load.csv`` and
``solar.csv``; buy/sell prices are expanded from a time-of-use schedule.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

MINUTES_PER_DAY = 1440
LOAD_FILE = "load.csv"
SOLAR_FILE = "solar.csv"


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario data."""


@dataclass(frozen=True)
class TouSchedule:
    """Time-of-use tariff in cents/kWh.

    Off-peak 19:00-07:00, mid-peak 07:00-12:00 and 17:00-19:00,
    on-peak 12:00-17:00. Selling is a flat price.
    """

    off_peak: float = 6.5
    mid_peak: float = 9.4
    on_peak: float = 13.4
    sell: float = 5.0

    def __post_init__(self):
        for name in ("off_peak", "mid_peak", "on_peak", "sell"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ScenarioError(f"TOU price {name} must be positive, got {v}")

    @cached_property
    def daily_buy(self) -> np.ndarray:
        hours = np.arange(MINUTES_PER_DAY) // 60
        buy = np.full(MINUTES_PER_DAY, self.off_peak)
        buy[((hours >= 7) & (hours < 12)) | ((hours >= 17) & (hours < 19))] = self.mid_peak
        buy[(hours >= 12) & (hours < 17)] = self.on_peak
        buy.flags.writeable = False
        return buy


def tou_price_at(tou: TouSchedule, minute_of_day: int) -> tuple[float, float]:
    """Return ``(buy, sell)`` for a clock minute in ``[0, 1440)``."""
    if not 0 <= minute_of_day < MINUTES_PER_DAY:
        raise ScenarioError(f"minute_of_day out of range: {minute_of_day}")
    return float(tou.daily_buy[minute_of_day]), tou.sell


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Minute-resolution exogenous inputs over a horizon of ``minutes``."""

    load_kw: np.ndarray
    solar_kw: np.ndarray
    buy_price: np.ndarray
    sell_price: np.ndarray
    minutes: int = field(init=False)

    def __post_init__(self):
        arrays = {}
        for name in ("load_kw", "solar_kw", "buy_price", "sell_price"):
            arr = _frozen(getattr(self, name))
            if arr.ndim != 1:
                raise ScenarioError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(arr)):
                raise ScenarioError(f"{name} contains non-finite values")
            arrays[name] = arr
            object.__setattr__(self, name, arr)
        lengths = {len(a) for a in arrays.values()}
        if len(lengths) != 1:
            raise ScenarioError(f"series lengths differ: { {k: len(v) for k, v in arrays.items()} }")
        n = lengths.pop()
        if n == 0 or n % 60:
            raise ScenarioError(f"scenario length must be a positive multiple of 60 minutes, got {n}")
        if np.any(arrays["load_kw"] < 0) or np.any(arrays["solar_kw"] < 0):
            raise ScenarioError("loads and solar power must be non-negative")
        if np.any(arrays["buy_price"] <= 0) or np.any(arrays["sell_price"] <= 0):
            raise ScenarioError("prices must be positive")
        object.__setattr__(self, "minutes", n)

    @classmethod
    def from_power(cls, load_kw, solar_kw, tou: TouSchedule | None = None) -> "Scenario":
        tou = tou or TouSchedule()
        n = len(load_kw)
        if len(solar_kw) != n:
            raise ScenarioError(f"length mismatch: {n} load rows vs {len(solar_kw)} solar rows")
        clock = np.arange(n) % MINUTES_PER_DAY
        return cls(load_kw, solar_kw, tou.daily_buy[clock], np.full(n, tou.sell))

    @property
    def hours(self) -> int:
        return self.minutes // 60

    @cached_property
    def hourly(self) -> dict[str, np.ndarray]:
        """Per-hour minute averages of every series."""
        return {
            name: _frozen(getattr(self, name).reshape(-1, 60).mean(axis=1))
            for name in ("load_kw", "solar_kw", "buy_price", "sell_price")
        }

    def equals(self, other: "Scenario") -> bool:
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("load_kw", "solar_kw", "buy_price", "sell_price")
        )


@dataclass(frozen=True)
class StateWindow:
    """Controller input: T-step hourly forecasts plus the reported SoC ``b``."""

    load_kw: tuple[float, ...]
    solar_kw: tuple[float, ...]
    buy: tuple[float, ...]
    sell: tuple[float, ...]
    b: float

    def __post_init__(self):
        n = len(self.load_kw)
        if n < 1 or any(len(s) != n for s in (self.solar_kw, self.buy, self.sell)):
            raise ScenarioError("window series must share a positive length")

    @property
    def T(self) -> int:
        return len(self.load_kw)

    def with_soc(self, b: float) -> "StateWindow":
        return StateWindow(self.load_kw, self.solar_kw, self.buy, self.sell, b)


def hourly_window(scenario: Scenario, hour_index: int, T: int, b: float) -> StateWindow:
    """Exact-forecast window starting at ``hour_index``, wrapping past the end."""
    H = scenario.hours
    if not 0 <= hour_index < H:
        raise ScenarioError(f"hour_index {hour_index} outside [0, {H})")
    if T < 1:
        raise ScenarioError("T must be >= 1")
    idx = (hour_index + np.arange(T)) % H
    hv = scenario.hourly
    return StateWindow(
        tuple(hv["load_kw"][idx].tolist()),
        tuple(hv["solar_kw"][idx].tolist()),
        tuple(hv["buy_price"][idx].tolist()),
        tuple(hv["sell_price"][idx].tolist()),
        float(b),
    )


# --- CSV ingestion ---------------------------------------------------------

def _read_series(path: str | os.PathLike, column: str) -> np.ndarray:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read ({exc})") from exc
    if not rows:
        raise ScenarioError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != ["minute", column]:
        raise ScenarioError(f"{path}: row 1: expected header 'minute,{column}', got {','.join(header)!r}")
    if len(rows) == 1:
        raise ScenarioError(f"{path}: no data rows")
    values = np.empty(len(rows) - 1)
    for i, row in enumerate(rows[1:]):
        lineno = i + 2
        if len(row) != 2:
            raise ScenarioError(f"{path}: row {lineno}: expected 2 fields, got {len(row)}")
        try:
            minute = int(row[0])
            value = float(row[1])
        except ValueError as exc:
            raise ScenarioError(f"{path}: row {lineno}: parse error ({exc})") from exc
        if minute != i:
            raise ScenarioError(f"{path}: row {lineno}: expected minute {i}, got {minute}")
        if not math.isfinite(value) or value < 0:
            raise ScenarioError(f"{path}: row {lineno}: {column} must be finite and >= 0, got {row[1]}")
        values[i] = value
    return values


def load_scenario(load_path, solar_path, tou: TouSchedule | None = None) -> Scenario:
    load = _read_series(load_path, "load_kw")
    solar = _read_series(solar_path, "solar_kw")
    if len(load) != len(solar):
        raise ScenarioError(
            f"length mismatch: {load_path} has {len(load)} rows, {solar_path} has {len(solar)}"
        )
    return Scenario.from_power(load, solar, tou)


def load_scenario_dir(directory, tou: TouSchedule | None = None) -> Scenario:
    directory = Path(directory)
    return load_scenario(directory / LOAD_FILE, directory / SOLAR_FILE, tou)


def save_scenario(scenario: Scenario, directory) -> tuple[Path, Path]:
    """Write ``load.csv`` and ``solar.csv``; floats use round-trip ``repr``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for fname, column, series in (
        (LOAD_FILE, "load_kw", scenario.load_kw),
        (SOLAR_FILE, "solar_kw", scenario.solar_kw),
    ):
        path = directory / fname
        with path.open("w", newline="") as fh:
            fh.write(f"minute,{column}\n")
            fh.writelines(f"{i},{v!r}\n" for i, v in enumerate(series.tolist()))
        paths.append(path)
    return paths[0], paths[1]


# --- synthetic data --------------------------------------------------------

@dataclass(frozen=True)
class SynthShape:
    """Amplitudes of the synthetic three-household load and PV curves (kW)."""

    base_load: float = 0.9
    morning_peak: float = 1.4
    evening_peak: float = 4.2
    evening_hour: float = 17.5
    evening_width: float = 1.8
    solar_peak: float = 5.2
    dawn_hour: float = 5.5
    dusk_hour: float = 20.5
    noise: float = 0.25


def _bump(t_hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((t_hours - center) / width) ** 2)


def synth_scenario(seed: int = 7, days: int = 2, shape: SynthShape | None = None,
                   tou: TouSchedule | None = None) -> Scenario:
    """Deterministic diurnal scenario with an evening load peak and a PV bell.

    Loads peak in the evening above any midday value; solar is exactly zero
    outside ``[dawn_hour, dusk_hour)``.
    """
    if days < 1:
        raise ScenarioError("days must be >= 1")
    shape = shape or SynthShape()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE4]))
    n = days * MINUTES_PER_DAY
    t = (np.arange(n) % MINUTES_PER_DAY) / 60.0

    profile = (
        shape.base_load
        + shape.morning_peak * _bump(t, 7.5, 1.0)
        + shape.evening_peak * _bump(t, shape.evening_hour, shape.evening_width)
    )
    # smooth multiplicative noise, per-day amplitude jitter
    eps = rng.normal(0.0, 1.0, n)
    ar = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = 0.97 * acc + 0.243 * eps[i]
        ar[i] = acc
    day_scale = np.repeat(1.0 + 0.05 * rng.uniform(-1, 1, days), MINUTES_PER_DAY)
    load = np.clip(profile * day_scale * (1.0 + shape.noise * ar / 4.0), 0.05, None)

    span = shape.dusk_hour - shape.dawn_hour
    phase = (t - shape.dawn_hour) / span
    daylight = (phase >= 0.0) & (phase < 1.0)
    bell = np.where(daylight, np.sin(np.pi * np.clip(phase, 0.0, 1.0)) ** 1.5, 0.0)
    cloud = np.clip(1.0 - 0.08 * np.abs(rng.normal(0.0, 1.0, n)), 0.0, 1.0)
    solar = np.where(daylight, shape.solar_peak * bell * cloud, 0.0)

    return Scenario.from_power(np.round(load, 6), np.round(solar, 6), tou)


BUNDLED_SEED = 7
BUNDLED_DAYS = 2


def bundled_scenario_dir() -> Path:
    """Directory of the packaged two-day synthetic scenario (seed 7)."""
    return Path(__file__).resolve().parent / "data" / "synthetic_2day"


def bundled_scenario(tou: TouSchedule | None = None) -> Scenario:
    return load_scenario_dir(bundled_scenario_dir(), tou)
