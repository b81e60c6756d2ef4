"""One-step TD advantage actor-critic that learns SoC-spoofing offsets.

Everything is plain numpy: a small tanh MLP with hand-written backward pass,
a Gaussian policy whose sample is squashed onto the hour's feasible offset
interval, a state-value critic and Adam. Training is online, one update per
control hour.
"""
from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .dispatch import ControllerConfig
from .plant import MicrogridSim, hourly_cost_diffs, run_simulation
from .scenario import Scenario
from .threat import AttackBounds, AttackMode, FdiAction, apply_fdi, feasible_interval

LOG_2PI = math.log(2.0 * math.pi)
REWARD_SCALE = 1000.0
LOG_STD_LIMIT = 20.0
AGENT_FILE_MAGIC = "mgpentest-agent v1"


class TrainingError(RuntimeError):
    pass


def substream(seed: int, *names) -> np.random.Generator:
    """Independent generator for a named purpose derived from one seed."""
    keys = [zlib.crc32(str(n).encode()) for n in names]
    return np.random.default_rng(np.random.SeedSequence([int(seed), *keys]))


# --- multilayer perceptron -------------------------------------------------

@dataclass
class Mlp:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...]

    def __post_init__(self):
        n = len(self.sizes) - 1
        if not (len(self.weights) == len(self.biases) == len(self.activations) == n):
            raise ValueError("layer count mismatch")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[i + 1], self.sizes[i]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} shape mismatch: W{W.shape}, b{b.shape}")
        for a in self.activations:
            if a not in ("tanh", "linear"):
                raise ValueError(f"unknown activation {a!r}")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator,
             hidden: str = "tanh", out_gain: float = 0.01) -> "Mlp":
        sizes = tuple(int(s) for s in sizes)
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else 1.0
            weights.append(rng.normal(0.0, gain / math.sqrt(fan_in), (fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        acts = tuple([hidden] * (len(sizes) - 2) + ["linear"])
        return cls(sizes, weights, biases, acts)

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, [W.copy() for W in self.weights], [b.copy() for b in self.biases],
                   self.activations)


def mlp_forward(net: Mlp, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns the output and the per-layer activations (input first)."""
    h = np.asarray(x, dtype=float)
    if h.shape != (net.sizes[0],):
        raise ValueError(f"input shape {h.shape} != ({net.sizes[0]},)")
    cache = [h]
    for W, b, act in zip(net.weights, net.biases, net.activations):
        h = W @ h + b
        if act == "tanh":
            h = np.tanh(h)
        cache.append(h)
    return h, cache


def mlp_backward(net: Mlp, cache: list[np.ndarray], grad_out) -> list[np.ndarray]:
    """Gradients in ``net.params()`` order for an upstream gradient on the output."""
    g = np.asarray(grad_out, dtype=float)
    if g.shape != (net.sizes[-1],) or len(cache) != len(net.sizes):
        raise ValueError("gradient/cache shape mismatch")
    layers = []
    for i in range(len(net.weights) - 1, -1, -1):
        if net.activations[i] == "tanh":
            g = g * (1.0 - cache[i + 1] ** 2)
        layers.append((np.outer(g, cache[i]), g.copy()))
        g = net.weights[i].T @ g
    return [arr for pair in reversed(layers) for arr in pair]


# --- optimisers -------------------------------------------------------------

class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr = params, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Sgd:
    def __init__(self, params: list[np.ndarray], lr: float):
        self.params, self.lr = params, lr

    def step(self, grads: list[np.ndarray]) -> None:
        for p, g in zip(self.params, grads):
            p -= self.lr * g


def make_optimizer(kind: str, params, lr):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return Sgd(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")


# --- policy, critic ---------------------------------------------------------

@dataclass
class GaussianPolicy:
    """Mean ``action_scale * net(s)``, state-independent log standard deviation."""

    mean_net: Mlp
    log_std: np.ndarray  # shape (1,), kept as an array so optimisers update in place
    action_scale: float = 1.0

    @property
    def std(self) -> float:
        return float(np.exp(self.log_std[0]))

    def mean(self, s) -> tuple[float, list[np.ndarray]]:
        out, cache = mlp_forward(self.mean_net, s)
        return self.action_scale * float(out[0]), cache

    def params(self) -> list[np.ndarray]:
        return self.mean_net.params() + [self.log_std]


@dataclass
class Critic:
    net: Mlp
    value_scale: float = 1.0

    def value(self, s) -> tuple[float, list[np.ndarray]]:
        out, cache = mlp_forward(self.net, s)
        return self.value_scale * float(out[0]), cache

    def params(self) -> list[np.ndarray]:
        return self.net.params()


@dataclass(frozen=True)
class AgentState:
    b: float
    c: float
    d: float
    load_kw: float
    solar_kw: float

    def vector(self) -> np.ndarray:
        return np.array([self.b, self.c, self.d, self.load_kw, self.solar_kw])


def squash(z: float, lo: float, hi: float) -> tuple[float, float]:
    """Map ``z`` onto ``(lo, hi)`` with slope 1 at the midpoint.

    Returns the action and ``log |da/dz|``.
    """
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    if half <= 1e-12:
        return mid, 0.0
    u = (z - mid) / half
    au = abs(u)
    log_jac = math.log(4.0) - 2.0 * (au + math.log1p(math.exp(-2.0 * au)))
    return mid + half * math.tanh(u), log_jac


def gaussian_log_density(z: float, mu: float, log_std: float) -> float:
    return -0.5 * ((z - mu) / math.exp(log_std)) ** 2 - log_std - 0.5 * LOG_2PI


def sample_action(policy: GaussianPolicy, s, lo: float, hi: float,
                  rng: Optional[np.random.Generator]):
    """Draw an offset in ``[lo, hi]``; ``rng=None`` gives the deterministic mean action.

    Returns ``(a, log_prob, z)`` where ``z`` is the pre-squash sample.
    """
    mu, _ = policy.mean(s)
    ls = float(policy.log_std[0])
    z = mu if rng is None else mu + math.exp(ls) * float(rng.standard_normal())
    a, log_jac = squash(z, lo, hi)
    return a, gaussian_log_density(z, mu, ls) - log_jac, z


def td_advantage(r: float, v_s: float, v_s_next: float, gamma: float, terminal: bool) -> float:
    return r + (0.0 if terminal else gamma * v_s_next) - v_s


@dataclass(frozen=True)
class Transition:
    s: np.ndarray          # normalised state
    a: FdiAction
    z: float
    r: float
    s_next: np.ndarray
    terminal: bool


def loss_gradients(policy: GaussianPolicy, critic: Critic, tr: Transition, gamma: float):
    """Combined loss ``delta**2 - log_prob * delta`` and its parameter gradients.

    The TD target inside the critic loss and ``delta`` in the actor loss are
    held constant (semi-gradient).
    """
    v_s, c_cache = critic.value(tr.s)
    v_next = 0.0 if tr.terminal else critic.value(tr.s_next)[0]
    delta = td_advantage(tr.r, v_s, v_next, gamma, tr.terminal)
    if not math.isfinite(delta):
        raise TrainingError(f"non-finite TD error {delta} (reward {tr.r}, V(s) {v_s})")

    critic_grads = mlp_backward(critic.net, c_cache, np.array([-2.0 * delta * critic.value_scale]))

    mu, a_cache = policy.mean(tr.s)
    ls = float(policy.log_std[0])
    var = math.exp(2.0 * ls)
    dlogp_dmu = (tr.z - mu) / var
    dlogp_dls = (tr.z - mu) ** 2 / var - 1.0
    actor_grads = mlp_backward(policy.mean_net, a_cache,
                               np.array([-delta * dlogp_dmu * policy.action_scale]))
    actor_grads.append(np.array([-delta * dlogp_dls]))

    log_prob = gaussian_log_density(tr.z, mu, ls)
    losses = {"delta": delta, "critic": delta * delta, "actor": -log_prob * delta}
    return losses, actor_grads, critic_grads


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 1000
    K: int = 48
    gamma: float = 0.99
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    seed: int = 0
    mode: str = "full"
    hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = math.log(5.0)
    init_soc: Optional[float] = None  # None: uniform in the SoC band per episode
    optimizer: str = "adam"

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.episodes < 1 or self.K < 1:
            raise ValueError("episodes and K must be >= 1")


@dataclass
class Learner:
    policy: GaussianPolicy
    critic: Critic
    config: TrainConfig
    actor_opt: object = field(init=False)
    critic_opt: object = field(init=False)

    def __post_init__(self):
        self.actor_opt = make_optimizer(self.config.optimizer, self.policy.params(), self.config.actor_lr)
        self.critic_opt = make_optimizer(self.config.optimizer, self.critic.params(), self.config.critic_lr)


def update_step(learner: Learner, tr: Transition) -> dict:
    """One online actor and critic update from a single transition."""
    losses, actor_grads, critic_grads = loss_gradients(learner.policy, learner.critic, tr,
                                                       learner.config.gamma)
    if not all(math.isfinite(v) for v in losses.values()):
        raise TrainingError(f"non-finite loss {losses} at reward {tr.r}")
    learner.critic_opt.step(critic_grads)
    learner.actor_opt.step(actor_grads)
    ls = float(learner.policy.log_std[0])
    if not -LOG_STD_LIMIT <= ls <= LOG_STD_LIMIT:
        raise TrainingError(f"policy log-std diverged to {ls} at reward {tr.r}")
    return losses


# --- environments -----------------------------------------------------------

class Environment(Protocol):
    state_scales: np.ndarray

    def reset(self, rng: np.random.Generator) -> np.ndarray: ...
    def action_interval(self) -> tuple[float, float]: ...
    def step(self, a: float) -> tuple[float, np.ndarray, bool]: ...


def state_scales(scenario: Scenario, config: ControllerConfig, K: int) -> np.ndarray:
    cds = hourly_cost_diffs(scenario, config)
    hours = [k % scenario.hours for k in range(K)]
    c_scale = max(max(abs(cds[h].c[0]) for h in hours), 1e-9)
    d_scale = max(max(abs(cds[h].d[0]) for h in hours), 1e-9)
    return np.array([100.0, c_scale, d_scale, 10.0, 10.0])


class MicrogridEnv:
    """K control hours of the plant with the attacker in the loop."""

    def __init__(self, scenario: Scenario, config: ControllerConfig, bounds: AttackBounds,
                 K: int = 48, init_soc: Optional[float] = None, scales=None):
        self.scenario, self.config, self.bounds, self.K = scenario, config, bounds, K
        self.init_soc = init_soc
        self.cost_diffs = hourly_cost_diffs(scenario, config)
        self.state_scales = (np.asarray(scales, dtype=float) if scales is not None
                             else state_scales(scenario, config, K))
        self.sim: Optional[MicrogridSim] = None

    def _observe(self) -> np.ndarray:
        ctx = self.sim.context()
        return np.array([ctx.soc, ctx.c, ctx.d, ctx.load_kw, ctx.solar_kw])

    def reset(self, rng) -> np.ndarray:
        if self.init_soc is None:
            soc = float(rng.uniform(self.config.b_min, self.config.b_max))
        else:
            soc = float(self.init_soc)
        self.sim = MicrogridSim(self.scenario, self.config, soc, keep_trace=False,
                                cost_diffs=self.cost_diffs)
        return self._observe()

    def action_interval(self) -> tuple[float, float]:
        return feasible_interval(self.sim.soc, self.bounds, self.config)

    def step(self, a: float):
        reported = apply_fdi(self.sim.soc, a, self.bounds, self.config)
        cost = self.sim.step(reported)
        done = self.sim.hour >= self.K
        return REWARD_SCALE * cost, self._observe(), done


# --- agent bundle, training, evaluation -------------------------------------

@dataclass
class Agent:
    policy: GaussianPolicy
    critic: Critic
    scales: np.ndarray
    bounds: AttackBounds

    def normalise(self, raw) -> np.ndarray:
        return np.asarray(raw, dtype=float) / self.scales

    def attacker(self, config: ControllerConfig, rng: Optional[np.random.Generator]):
        """Plant hook: spoof the reported SoC from the hour's context."""
        def hook(ctx, b):
            s = self.normalise([ctx.soc, ctx.c, ctx.d, ctx.load_kw, ctx.solar_kw])
            lo, hi = feasible_interval(b, self.bounds, config)
            a, _, _ = sample_action(self.policy, s, lo, hi, rng)
            return apply_fdi(b, a, self.bounds, config)
        return hook


def new_agent(config: TrainConfig, scales, value_scale: float, n_inputs: int = 5,
              bounds: Optional[AttackBounds] = None, action_scale: float = 1.0) -> Agent:
    rng = substream(config.seed, "init")
    sizes = (n_inputs, *config.hidden, 1)
    policy = GaussianPolicy(Mlp.init(sizes, rng), np.array([config.init_log_std]), action_scale)
    critic = Critic(Mlp.init(sizes, rng), value_scale)
    bounds = bounds or AttackBounds.for_mode(config.mode)
    return Agent(policy, critic, np.asarray(scales, dtype=float), bounds)


@dataclass
class TrainResult:
    agent: Agent
    curve: list[float]
    episode_costs: list[float]


def train_env(env: Environment, agent: Agent, config: TrainConfig, ledger_check=None) -> TrainResult:
    """Run ``config.episodes`` episodes with one update per step."""
    learner = Learner(agent.policy, agent.critic, config)
    rng_env = substream(config.seed, "env")
    rng_act = substream(config.seed, "action")
    curve, costs = [], []
    for ep in range(config.episodes):
        s = agent.normalise(env.reset(rng_env))
        total = 0.0
        done = False
        while not done:
            lo, hi = env.action_interval()
            a, _, z = sample_action(agent.policy, s, lo, hi, rng_act)
            r, raw_next, done = env.step(a)
            s_next = agent.normalise(raw_next)
            update_step(learner, Transition(s, FdiAction(a), z, r, s_next, done))
            total += r
            s = s_next
        curve.append(total)
        if ledger_check is not None:
            costs.append(ledger_check(ep, total))
    return TrainResult(agent, curve, costs)


def train(scenario: Scenario, plant_config: ControllerConfig, config: TrainConfig) -> TrainResult:
    """Train a spoofing agent against the plant and controller."""
    bounds = AttackBounds.for_mode(config.mode)
    env = MicrogridEnv(scenario, plant_config, bounds, config.K, config.init_soc)
    mid = 0.5 * (plant_config.b_min + plant_config.b_max)
    ref = run_simulation(scenario, plant_config, mid if config.init_soc is None else config.init_soc,
                         hours=config.K, cost_diffs=env.cost_diffs)
    value_scale = max(abs(REWARD_SCALE * ref.total_cost), 1.0)
    agent = new_agent(config, env.state_scales, value_scale, bounds=bounds)

    def ledger(ep, total_reward):
        cost = env.sim.result().total_cost
        expect = REWARD_SCALE * cost
        if abs(total_reward - expect) > 1e-6 * max(1.0, abs(expect)):
            raise TrainingError(f"episode {ep}: reward sum {total_reward} != 1000 x cost {expect}")
        return cost

    return train_env(env, agent, config, ledger)


@dataclass(frozen=True)
class ReportRow:
    init_soc: float
    attack_mode: str
    cost: float
    cost_increase_pct: float
    avg_charge: float
    avg_reported: float


def evaluate(agent: Agent, scenario: Scenario, config: ControllerConfig,
             init_socs: Sequence[float], runs: int = 10, seed: int = 0,
             hours: Optional[int] = None) -> list[ReportRow]:
    """No-attack and attacked rows per initial SoC, attacked rows averaged over ``runs``."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    cds = hourly_cost_diffs(scenario, config)
    mode = agent.bounds.mode.value
    rows = []
    for init in init_socs:
        base = run_simulation(scenario, config, init, hours=hours, cost_diffs=cds)
        rows.append(ReportRow(init, "none", base.total_cost, 0.0, base.avg_soc, base.avg_reported_soc))
        cost = charge = reported = 0.0
        for k in range(runs):
            rng = substream(seed, "eval", repr(float(init)), k)
            res = run_simulation(scenario, config, init, attacker=agent.attacker(config, rng),
                                 hours=hours, cost_diffs=cds)
            cost += res.total_cost
            charge += res.avg_soc
            reported += res.avg_reported_soc
        cost, charge, reported = cost / runs, charge / runs, reported / runs
        incr = 100.0 * (cost - base.total_cost) / abs(base.total_cost) if base.total_cost else 0.0
        if cost == base.total_cost:
            incr = 0.0
        rows.append(ReportRow(init, mode, cost, incr, charge, reported))
    return rows


REPORT_HEADER = ("init_soc", "attack_mode", "cost", "cost_increase_pct", "avg_charge", "avg_reported")


def write_report(rows: Sequence[ReportRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([repr(r.init_soc), r.attack_mode, repr(r.cost), repr(r.cost_increase_pct),
                        repr(r.avg_charge), repr(r.avg_reported)])


def write_curve(curve: Sequence[float], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("episode,cumulative_reward\n")
        fh.writelines(f"{i + 1},{v!r}\n" for i, v in enumerate(curve))


# --- agent file -------------------------------------------------------------

def save_agent(agent: Agent, path) -> None:
    p, c = agent.policy, agent.critic
    lines = [
        AGENT_FILE_MAGIC,
        f"mode {agent.bounds.mode.value}",
        f"bounds {agent.bounds.a_min!r} {agent.bounds.a_max!r}",
        "actor " + " ".join(map(str, p.mean_net.sizes)),
        "actor_activations " + " ".join(p.mean_net.activations),
        "critic " + " ".join(map(str, c.net.sizes)),
        "critic_activations " + " ".join(c.net.activations),
        "scales " + " ".join(repr(float(v)) for v in agent.scales),
        f"action_scale {p.action_scale!r}",
        f"value_scale {c.value_scale!r}",
        f"log_std {float(p.log_std[0])!r}",
        "params",
    ]
    for arr in p.mean_net.params() + c.net.params():
        flat = arr.ravel().tolist()
        for i in range(0, len(flat), 8):
            lines.append(" ".join(repr(v) for v in flat[i:i + 8]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_agent(path) -> Agent:
    with open(path) as fh:
        text = fh.read()
    head, sep, body = text.partition("\nparams\n")
    lines = head.splitlines()
    if not sep or not lines or lines[0] != AGENT_FILE_MAGIC:
        raise ValueError(f"{path}: not a {AGENT_FILE_MAGIC!r} file")
    meta = {}
    for line in lines[1:]:
        key, _, val = line.partition(" ")
        meta[key] = val.split()
    values = iter(float(v) for v in body.split())

    def build(sizes, acts):
        sizes = tuple(int(s) for s in sizes)
        ws, bs = [], []
        for fi, fo in zip(sizes, sizes[1:]):
            ws.append(np.array([next(values) for _ in range(fi * fo)]).reshape(fo, fi))
            bs.append(np.array([next(values) for _ in range(fo)]))
        return Mlp(sizes, ws, bs, tuple(acts))

    try:
        actor = build(meta["actor"], meta["actor_activations"])
        critic = build(meta["critic"], meta["critic_activations"])
    except StopIteration:
        raise ValueError(f"{path}: truncated parameter block") from None
    if next(values, None) is not None:
        raise ValueError(f"{path}: trailing parameters")
    a_min, a_max = (float(v) for v in meta["bounds"])
    bounds = AttackBounds(a_min, a_max, AttackMode(meta["mode"][0]))
    policy = GaussianPolicy(actor, np.array([float(meta["log_std"][0])]), float(meta["action_scale"][0]))
    return Agent(policy, Critic(critic, float(meta["value_scale"][0])),
                 np.array([float(v) for v in meta["scales"]]), bounds)
