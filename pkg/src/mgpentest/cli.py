"""Command-line entry point: ``mgpentest <command> [options]``.

Every command writes a flat ``key=value`` run manifest next to its outputs.
``mgpentest replay <manifest>`` re-executes the recorded command line after
checking that input files still hash to the recorded digests.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .agent import (TrainConfig, TrainingError, evaluate, load_agent, save_agent, substream,
                    train, write_curve, write_report)
from .dispatch import ControllerConfig, DispatchError
from .plant import baseline_all_off, run_simulation, write_trace
from .scenario import (LOAD_FILE, SOLAR_FILE, ScenarioError, TouSchedule, bundled_scenario_dir,
                       load_scenario_dir, save_scenario, synth_scenario)
from .threat import (AttackBounds, OracleError, oracle_attack_greedy, oracle_attack_horizon,
                     write_oracle_report)

PROG = "mgpentest"
MANIFEST_SUFFIX = ".manifest"
SYNTH_MANIFEST = "synth.manifest"
DEFAULT_INITS = "75,80,85,90,95,100"


class CliError(Exception):
    pass


# --- argument types ---------------------------------------------------------

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


# --- shared option groups ---------------------------------------------------

def _add_scenario(p):
    p.add_argument("--scenario", type=Path, default=None,
                   help="directory with load.csv and solar.csv (default: bundled synthetic scenario)")
    g = p.add_argument_group("tariff (cents/kWh)")
    g.add_argument("--off-peak", type=_positive_float, default=6.5)
    g.add_argument("--mid-peak", type=_positive_float, default=9.4)
    g.add_argument("--on-peak", type=_positive_float, default=13.4)
    g.add_argument("--sell", type=_positive_float, default=5.0)


def _add_controller(p):
    g = p.add_argument_group("controller")
    g.add_argument("--T", dest="T", type=_positive_int, default=24, help="forecast horizon in hours")
    g.add_argument("--capacity-kwh", type=_positive_float, default=20.0)
    g.add_argument("--b-min", type=float, default=75.0)
    g.add_argument("--b-max", type=float, default=100.0)


def _add_bounds(p):
    g = p.add_argument_group("attacker")
    g.add_argument("--attack-mode", choices=("full", "pct5"), default="full")
    g.add_argument("--a-min", type=float, default=-100.0, help="lower offset bound in SoC points")
    g.add_argument("--a-max", type=float, default=100.0, help="upper offset bound in SoC points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="write a synthetic diurnal scenario")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--days", type=_positive_int, default=2)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--plot", type=Path, help="PNG of the hourly series")

    p = sub.add_parser("simulate", help="run the control loop and write a minute trace")
    _add_scenario(p)
    _add_controller(p)
    p.add_argument("--init-soc", type=float, default=90.0)
    p.add_argument("--hours", type=_nonneg_int, default=None, help="default: whole scenario")
    p.add_argument("--force-off", action="store_true", help="keep the battery OFF (baseline)")
    p.add_argument("--agent", type=Path, help="attack the run with a trained agent")
    p.add_argument("--seed", type=int, default=0, help="seed for the agent's sampling")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", type=Path)

    p = sub.add_parser("train", help="train a spoofing agent")
    _add_scenario(p)
    _add_controller(p)
    p.add_argument("--episodes", type=_positive_int, default=1000)
    p.add_argument("--K", dest="K", type=_positive_int, default=48, help="hours per episode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attack-mode", choices=("full", "pct5"), default="full")
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--actor-lr", type=_positive_float, default=3e-4)
    p.add_argument("--critic-lr", type=_positive_float, default=1e-3)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--init-soc", type=float, default=None,
                   help="fixed initial SoC (default: uniform in the band per episode)")
    p.add_argument("--out", type=Path, required=True, help="agent file")
    p.add_argument("--curve", type=Path, required=True, help="learning curve CSV")
    p.add_argument("--plot", type=Path)

    p = sub.add_parser("attack", help="evaluate an agent over initial SoC values")
    _add_scenario(p)
    _add_controller(p)
    p.add_argument("--agent", type=Path, required=True)
    p.add_argument("--init-soc", type=_float_list, default=_float_list(DEFAULT_INITS))
    p.add_argument("--runs", type=_positive_int, default=10)
    p.add_argument("--hours", type=_nonneg_int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", type=Path)

    p = sub.add_parser("oracle", help="grid-search reference attack")
    _add_scenario(p)
    _add_controller(p)
    _add_bounds(p)
    p.add_argument("--mode", choices=("greedy", "exact"), default="greedy")
    p.add_argument("--grid", type=_positive_float, default=0.5, help="offset grid step")
    p.add_argument("--hours", type=_nonneg_int, default=8)
    p.add_argument("--init-soc", type=float, default=90.0)
    p.add_argument("--limit", type=_positive_int, default=10 ** 6,
                   help="maximum sequences the exact search may cover")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", type=Path)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest", type=Path)
    return parser


# --- manifest ---------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _scenario_dir(args) -> Path:
    return args.scenario if args.scenario is not None else bundled_scenario_dir()


def _inputs(args) -> list[Path]:
    paths = []
    if getattr(args, "scenario", None) is not None or args.command in ("simulate", "train", "attack", "oracle"):
        d = _scenario_dir(args)
        paths += [d / LOAD_FILE, d / SOLAR_FILE]
    if getattr(args, "agent", None) is not None:
        paths.append(args.agent)
    return paths


def canonical_argv(args, parser: argparse.ArgumentParser) -> list[str]:
    """Command line with every option spelled out and paths made absolute."""
    sp = next(a for a in parser._subparsers._group_actions).choices[args.command]
    argv = [args.command]
    for action in sp._actions:
        if not action.option_strings or action.dest == "help":
            continue
        val = getattr(args, action.dest)
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if val:
                argv.append(flag)
            continue
        if val is None:
            continue
        if isinstance(val, Path):
            val = str(val.resolve())
        elif isinstance(val, list):
            val = ",".join(repr(v) for v in val)
        else:
            val = repr(val) if isinstance(val, float) else str(val)
        argv += [flag, val]
    return argv


def manifest_path(args) -> Path:
    if args.command == "synth":
        return args.out / SYNTH_MANIFEST
    return args.out.with_name(args.out.name + MANIFEST_SUFFIX)


def write_manifest(args, parser) -> Path:
    lines = [
        f"tool={PROG}",
        f"version={__version__}",
        f"command={args.command}",
        f"seed={getattr(args, 'seed', 'none')}",
        f"argv={json.dumps(canonical_argv(args, parser))}",
    ]
    for key, val in sorted(vars(args).items()):
        if key == "command":
            continue
        if isinstance(val, Path):
            val = val.resolve()
        lines.append(f"param.{key}={val}")
    for path in _inputs(args):
        lines.append(f"input.{Path(path).resolve()}={sha256_file(path)}")
    out = manifest_path(args)
    out.write_text("\n".join(lines) + "\n")
    return out


def read_manifest(path: Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read manifest {path}: {exc}") from exc
    entries = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise CliError(f"{path}: line {n}: expected key=value")
        entries[key] = val
    if entries.get("tool") != PROG or "argv" not in entries:
        raise CliError(f"{path}: not a {PROG} run manifest")
    return entries


# --- commands ---------------------------------------------------------------

def _tou(args) -> TouSchedule:
    return TouSchedule(args.off_peak, args.mid_peak, args.on_peak, args.sell)


def _controller(args) -> ControllerConfig:
    return ControllerConfig(T=args.T, b_min=args.b_min, b_max=args.b_max,
                            omega=args.capacity_kwh / 100.0)


def _load(args):
    return load_scenario_dir(_scenario_dir(args), _tou(args))


def _ensure_parent(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)


def cmd_synth(args) -> None:
    sc = synth_scenario(args.seed, args.days)
    save_scenario(sc, args.out)
    if args.plot:
        from .plots import plot_scenario
        plot_scenario(sc, args.plot)
    print(f"wrote {args.out / LOAD_FILE} and {args.out / SOLAR_FILE} ({sc.minutes} minutes)")


def cmd_simulate(args) -> None:
    sc, cfg = _load(args), _controller(args)
    if args.agent and args.force_off:
        raise CliError("--agent and --force-off are mutually exclusive")
    if args.force_off:
        result = baseline_all_off(sc, cfg, args.init_soc, args.hours)
        title = "Scenario: Battery OFF"
    elif args.agent:
        agent = load_agent(args.agent)
        hook = agent.attacker(cfg, substream(args.seed, "simulate"))
        result = run_simulation(sc, cfg, args.init_soc, attacker=hook, hours=args.hours)
        title = "Scenario: RL attack"
    else:
        result = run_simulation(sc, cfg, args.init_soc, hours=args.hours)
        title = "Scenario: No attack"
    _ensure_parent(args.out)
    write_trace(result, args.out)
    if args.plot:
        from .plots import plot_simulation
        plot_simulation(result, args.plot, title)
    print(result.summary())


def cmd_train(args) -> None:
    sc, cfg = _load(args), _controller(args)
    tc = TrainConfig(episodes=args.episodes, K=args.K, gamma=args.gamma, actor_lr=args.actor_lr,
                     critic_lr=args.critic_lr, seed=args.seed, mode=args.attack_mode,
                     init_soc=args.init_soc, optimizer=args.optimizer)
    res = train(sc, cfg, tc)
    for p in (args.out, args.curve):
        _ensure_parent(p)
    save_agent(res.agent, args.out)
    write_curve(res.curve, args.curve)
    if args.plot:
        from .plots import plot_curve
        plot_curve(res.curve, args.plot)
    n = min(50, len(res.curve))
    first = sum(res.curve[:n]) / n
    last = sum(res.curve[-n:]) / n
    print(f"episodes {len(res.curve)}: mean reward first {n} = {first:.1f}, last {n} = {last:.1f}")


def cmd_attack(args) -> None:
    sc, cfg = _load(args), _controller(args)
    agent = load_agent(args.agent)
    rows = evaluate(agent, sc, cfg, args.init_soc, runs=args.runs, seed=args.seed, hours=args.hours)
    _ensure_parent(args.out)
    write_report(rows, args.out)
    if args.plot:
        from .plots import plot_report
        plot_report(rows, args.plot)
    print(f"{'init':>6} {'mode':>5} {'cost':>8} {'incr%':>8} {'charge':>8} {'reported':>8}")
    for r in rows:
        print(f"{r.init_soc:6.1f} {r.attack_mode:>5} {r.cost:8.3f} {r.cost_increase_pct:8.2f} "
              f"{r.avg_charge:8.3f} {r.avg_reported:8.3f}")


def cmd_oracle(args) -> None:
    sc, cfg = _load(args), _controller(args)
    if not cfg.in_band(args.init_soc):
        raise CliError(f"--init-soc {args.init_soc} outside [{cfg.b_min}, {cfg.b_max}]")
    if args.hours > sc.hours:
        raise CliError(f"--hours {args.hours} exceeds the scenario length of {sc.hours} hours")
    bounds = AttackBounds.for_mode(args.attack_mode, args.a_min, args.a_max)
    if args.mode == "exact":
        run = oracle_attack_horizon(sc, cfg, args.init_soc, bounds, args.grid, args.hours, args.limit)
    else:
        run = oracle_attack_greedy(sc, cfg, args.init_soc, bounds, args.grid, args.hours)
    base = run_simulation(sc, cfg, args.init_soc, hours=args.hours)
    _ensure_parent(args.out)
    write_oracle_report(run, args.out)
    if args.plot:
        from .plots import plot_oracle
        plot_oracle(run, args.plot)
    print(f"no attack: {base.summary()}")
    print(f"{args.mode} oracle: {run.result.summary()}")


COMMANDS = {
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "attack": cmd_attack,
    "oracle": cmd_oracle,
}
ERRORS = (CliError, ScenarioError, DispatchError, OracleError, TrainingError, ValueError, OSError,
          ArithmeticError)


def cmd_replay(args, parser) -> None:
    entries = read_manifest(args.manifest)
    for key, digest in entries.items():
        if key.startswith("input."):
            path = Path(key[len("input."):])
            if not path.exists():
                raise CliError(f"replay input missing: {path}")
            if sha256_file(path) != digest:
                raise CliError(f"replay input changed since the recorded run: {path}")
    argv = json.loads(entries["argv"])
    _run(parser.parse_args(argv), parser)


def _run(args, parser) -> None:
    if args.command == "replay":
        cmd_replay(args, parser)
        return
    COMMANDS[args.command](args)
    write_manifest(args, parser)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _run(args, parser)
    except ERRORS as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
