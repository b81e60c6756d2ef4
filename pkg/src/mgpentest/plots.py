"""Figures written next to the CSV outputs of the command-line tools."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "legend.fontsize": 8,
}
_META = {"Software": "mgpentest"}


def _save(fig, path):
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def plot_simulation(result, path, title: str = "Scenario: No attack") -> None:
    """Load/PV, actual vs reported SoC with commands, and running cost."""
    minutes = np.array([r.minute for r in result.trace])
    if minutes.size == 0:
        return
    hours = minutes / 60.0
    load = np.array([r.load_kw for r in result.trace])
    solar = np.array([r.solar_kw for r in result.trace])
    soc = np.array([r.soc_after for r in result.trace])
    cost = np.cumsum([r.cost_delta for r in result.trace])
    k = np.arange(len(result.commands))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(9, 6.5), sharex=True)
        ax = axes[0]
        ax.plot(hours, load, lw=0.8, label="load")
        ax.plot(hours, solar, lw=0.8, label="solar")
        ax.set_ylabel("kW")
        ax.legend(loc="upper left")
        ax = axes[1]
        ax.plot(hours, soc, lw=1.0, label="actual")
        ax.step(k, result.reported, where="post", lw=1.0, ls="--", label="reported")
        ax.set_ylabel("SoC (%)")
        ax2 = ax.twinx()
        ax2.step(k, result.commands, where="post", color="0.6", lw=0.7)
        ax2.set_ylim(-0.1, 3.0)
        ax2.set_yticks([0, 1])
        ax2.set_ylabel("battery ON")
        ax.legend(loc="upper left")
        ax = axes[2]
        ax.plot(hours, cost, lw=1.0, color="k")
        ax.set_ylabel("cost ($)")
        ax.set_xlabel("hour")
        fig.suptitle(f"{title}. {result.summary()}")
        fig.tight_layout()
        _save(fig, path)


def plot_curve(curve: Sequence[float], path, window: int = 20) -> None:
    y = np.asarray(curve, dtype=float)
    x = np.arange(1, len(y) + 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(x, y, lw=0.5, alpha=0.5, label="episode")
        if len(y) >= window:
            smooth = np.convolve(y, np.ones(window) / window, mode="valid")
            ax.plot(x[window - 1:], smooth, lw=1.5, label=f"{window}-episode mean")
        ax.set_xlabel("episode")
        ax.set_ylabel("cumulative reward")
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def plot_report(rows, path) -> None:
    inits = sorted({r.init_soc for r in rows})
    modes = list(dict.fromkeys(r.attack_mode for r in rows))
    width = 0.8 / max(len(modes), 1)
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        for j, mode in enumerate(modes):
            by_init = {r.init_soc: r for r in rows if r.attack_mode == mode}
            xs = np.arange(len(inits)) + j * width
            color = f"C{j}"
            ax1.bar(xs, [by_init[i].cost for i in inits], width, color=color, label=mode)
            ax2.plot(inits, [by_init[i].avg_reported for i in inits], color=color, marker="o",
                     label=f"{mode} reported")
            ax2.plot(inits, [by_init[i].avg_charge for i in inits], color=color, marker="x", ls="--",
                     label=f"{mode} actual")
        ax1.set_xticks(np.arange(len(inits)) + width * (len(modes) - 1) / 2)
        ax1.set_xticklabels([f"{i:g}" for i in inits])
        ax1.set_xlabel("initial SoC (%)")
        ax1.set_ylabel("cost ($)")
        ax1.legend()
        ax2.set_xlabel("initial SoC (%)")
        ax2.set_ylabel("average SoC (%)")
        ax2.legend(ncol=2)
        fig.tight_layout()
        _save(fig, path)


def plot_oracle(run, path) -> None:
    res = run.result
    k = np.arange(len(run.actions))
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 4.5), sharex=True)
        ax1.step(k, res.actual, where="post", label="actual")
        ax1.step(k, res.reported, where="post", ls="--", label="reported")
        ax1.set_ylabel("SoC (%)")
        ax1.legend()
        ax2.bar(k, res.hourly_costs, color="0.4")
        ax2.set_ylabel("hourly cost ($)")
        ax2.set_xlabel("hour")
        fig.suptitle(f"Reference attack. Score: ${run.cost:.2f}")
        fig.tight_layout()
        _save(fig, path)


def plot_scenario(scenario, path) -> None:
    hv = scenario.hourly
    k = np.arange(scenario.hours)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3))
        ax.plot(k, hv["load_kw"], label="load")
        ax.plot(k, hv["solar_kw"], label="solar")
        ax.set_xlabel("hour")
        ax.set_ylabel("hourly mean (kW)")
        ax2 = ax.twinx()
        ax2.step(k, hv["buy_price"], where="post", color="0.5", lw=0.8)
        ax2.set_ylabel("buy price (c/kWh)")
        ax.legend(loc="upper left")
        fig.tight_layout()
        _save(fig, path)
