"""Run orchestration: seeding, agent construction, the iteration loop.

Every source of randomness has its own stream derived from the master seed,
so swapping the agent of one SU does not move the channel, fading or
sensing draws another run sees.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Iterator, Optional

import numpy as np

from dsarl import neural
from dsarl import reservoir as rc
from dsarl.agents import (Agent, DqnAgent, FixedRuleAgent, MlpQNetwork, MyopicAgent,
                          QLearningAgent, RcQNetwork)
from dsarl.channel import PropagationParams, achievable_rate, sigma_squared
from dsarl.config import AgentSpec, ExperimentConfig, config_hash, validate
from dsarl.environment import DsaEnvironment, Scenario, generate_scenario, resolve_slot
from dsarl.metrics import IterationMetrics, compute_metrics

log = logging.getLogger(__name__)

_STREAM_IDS = {"scenario": 0, "markov": 1, "fading": 2, "sensing": 3, "explore": 4,
               "init": 5, "shuffle": 6, "eval": 7}


def stream(seed: int, name: str, *sub: int) -> np.random.Generator:
    """Independent generator for component ``name`` (plus optional sub-indices)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_STREAM_IDS[name],) + sub)
    return np.random.default_rng(ss)


def propagation_params(cfg: ExperimentConfig) -> PropagationParams:
    r = asdict(cfg.radio)
    r.pop("su_power_mw")
    r.pop("pu_power_mw")
    return PropagationParams(**r)


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    s = cfg.scenario
    return generate_scenario(
        s.n_channels, s.n_sus, stream(cfg.seed, "scenario"), arena_m=s.arena_m,
        link_dist_range=tuple(s.link_distance_m), p11_range=tuple(s.p11_range),
        p00_range=tuple(s.p00_range), error_profile=s.sensing_error,
        schedule=s.schedule, seed=cfg.seed)


def build_environment(cfg: ExperimentConfig, scenario: Scenario, evaluation: bool = False):
    def rng(name, *sub):
        if evaluation:
            return stream(cfg.seed, "eval", _STREAM_IDS[name], *sub)
        return stream(cfg.seed, name, *sub)

    return DsaEnvironment(
        scenario, propagation_params(cfg), markov_rng=rng("markov"), fading_rng=rng("fading"),
        sensing_rngs=[rng("sensing", l) for l in range(scenario.n_sus)],
        su_power_mw=cfg.radio.su_power_mw, pu_power_mw=cfg.radio.pu_power_mw,
        penalty=cfg.penalty, reward_timing=cfg.scenario.reward_timing,
        fading=cfg.scenario.fading)


def interference_free_rate(cfg: ExperimentConfig, scenario: Scenario, su: int) -> float:
    """Rate of SU ``su`` alone on a free channel at mean gain sigma^2."""
    params = propagation_params(cfg)
    d = max(float(scenario.geometry.link_lengths()[su]), 1.0)
    snr = cfg.radio.su_power_mw * sigma_squared(d, params) / params.noise_mw
    return achievable_rate(snr, params)


def build_agent(spec: AgentSpec, cfg: ExperimentConfig, scenario: Scenario, su: int) -> Agent:
    n = scenario.n_channels
    n_actions = n + 1
    init_seed = int(stream(cfg.seed, "init", su).integers(2 ** 32))
    explore = stream(cfg.seed, "explore", su)
    if spec.kind == "dqn_rc":
        r = spec.reservoir
        res = rc.init_reservoir(rc.ReservoirConfig(r.n_reservoir, r.spectral_radius,
                                                   r.input_scale, r.connectivity,
                                                   r.leak_rate, init_seed), n_input=n)
        net = RcQNetwork(res, n_actions, fit=spec.readout_fit, ridge=spec.ridge,
                          batch_size=spec.batch_size)
        return DqnAgent(net, n_actions, explore, gamma=spec.gamma,
                        learning_rate=spec.learning_rate, epochs=spec.epochs, kind="dqn_rc")
    if spec.kind == "dqn_mlp":
        weights = neural.init_mlp(neural.MlpConfig((n, *spec.hidden_layers, n_actions), init_seed))
        net = MlpQNetwork(weights, shuffle=spec.shuffle, batch_size=spec.batch_size)
        return DqnAgent(net, n_actions, explore, gamma=spec.gamma,
                        learning_rate=spec.learning_rate, epochs=spec.epochs, kind="dqn_mlp",
                        fit_rng=stream(cfg.seed, "shuffle", su))
    if spec.kind == "qlearning":
        return QLearningAgent(n_actions, explore, alpha=spec.learning_rate, gamma=spec.gamma)
    if spec.kind == "myopic":
        return MyopicAgent(scenario.matrices, scenario.errors[su],
                           interference_free_rate(cfg, scenario, su), cfg.penalty,
                           allow_idle=spec.allow_idle)
    return FixedRuleAgent(spec.kind, channel=spec.channel)


@dataclass
class EpisodeResult:
    actions: np.ndarray
    outcomes: object


def play(env: DsaEnvironment, agents: list[Agent], epsilons: list[float], n_slots: int,
         learn: bool = True, rngs: Optional[list] = None) -> EpisodeResult:
    """Advance ``env`` by ``n_slots`` slots with the given agents.

    Batch agents choose their whole action sequence first; online agents
    then act slot by slot, each slot being settled before the next decision.
    """
    ro = env.rollout(n_slots)
    L = env.n_sus
    rngs = rngs or [None] * L
    actions = np.zeros((n_slots, L), dtype=np.int64)
    online = [l for l, a in enumerate(agents) if a.online]
    for l, agent in enumerate(agents):
        if not agent.online:
            actions[:, l] = agent.act_iteration(ro.sensed[l], epsilons[l], rngs[l])
    if online:
        for l in online:
            agents[l].begin_iteration(ro.sensed[l], epsilons[l], rngs[l])
        occ, gains = ro.reward_occupancy, ro.gains
        params, p_su, c = env.params, env.su_power_mw, env.penalty
        act_rows = actions.tolist()
        for t in range(n_slots):
            row = act_rows[t]
            for l in online:
                row[l] = agents[l].act(t)
            if learn:
                rewards, _ = resolve_slot(occ[t], row, gains[t], params, p_su, c)
                for l in online:
                    agents[l].update(t, row[l], rewards[l])
        actions = np.array(act_rows, dtype=np.int64)
    outcomes = env.resolve(ro, actions)
    if learn:
        for l, agent in enumerate(agents):
            if agent.learns and not agent.online:
                agent.learn(ro.sensed[l], actions[:, l], outcomes.rewards[:, l])
    return EpisodeResult(actions, outcomes)


class Experiment:
    """One configured run: scenario, environment and per-SU agents."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = validate(cfg)
        self.scenario = build_scenario(cfg)
        self.env = build_environment(cfg, self.scenario)
        self.agents = [build_agent(cfg.agent_for(l), cfg, self.scenario, l)
                       for l in range(self.scenario.n_sus)]
        self.iteration = 0
        self.history: list[IterationMetrics] = []

    def epsilons(self) -> list[float]:
        return [self.cfg.agent_for(l).epsilon.value(self.iteration) if a.learns else 0.0
                for l, a in enumerate(self.agents)]

    def step(self) -> IterationMetrics:
        eps = self.epsilons()
        res = play(self.env, self.agents, eps, self.cfg.slots_per_iteration)
        m = compute_metrics(res.outcomes.labels, res.outcomes.rewards, self.iteration, eps)
        self.history.append(m)
        self.iteration += 1
        return m

    def iterations(self) -> Iterator[IterationMetrics]:
        while self.iteration < self.cfg.iterations:
            m = self.step()
            if log.isEnabledFor(logging.INFO) and (m.iteration % 10 == 0
                                                   or self.iteration == self.cfg.iterations):
                log.info("iter %d success=%.3f pu=%.3f su=%.3f reward=%.3f", m.iteration,
                         m.aggregate("success_rate"), m.aggregate("pu_collision_rate"),
                         m.aggregate("su_collision_rate"), m.aggregate("mean_reward"))
            yield m

    def run(self) -> list[IterationMetrics]:
        for _ in self.iterations():
            pass
        return self.history

    def evaluate(self, n_slots: Optional[int] = None) -> IterationMetrics:
        """Greedy, non-learning pass on a fresh environment with evaluation streams.

        Depends only on (config, seed, agent weights), so a reloaded
        checkpoint reproduces it exactly.
        """
        n_slots = n_slots or self.cfg.evaluation_slots or self.cfg.slots_per_iteration
        env = build_environment(self.cfg, self.scenario, evaluation=True)
        rngs = [stream(self.cfg.seed, "eval", _STREAM_IDS["explore"], l)
                for l in range(len(self.agents))]
        zero = [0.0] * len(self.agents)
        res = play(env, self.agents, zero, n_slots, learn=False, rngs=rngs)
        return compute_metrics(res.outcomes.labels, res.outcomes.rewards, 0, zero)

    def checkpoint(self) -> dict:
        return {
            "format": "dsarl-checkpoint-1",
            "config_hash": config_hash(self.cfg),
            "seed": self.cfg.seed,
            "iteration": self.iteration,
            "agents": [{"su": l, "kind": a.kind, "spec": asdict(self.cfg.agent_for(l)),
                        "state": a.state_dict()} for l, a in enumerate(self.agents)],
        }

    def load_checkpoint(self, ckpt: dict) -> None:
        if len(ckpt["agents"]) != len(self.agents):
            raise ValueError(f"checkpoint holds {len(ckpt['agents'])} agents, "
                             f"config has {len(self.agents)} SUs")
        for a, entry in zip(self.agents, ckpt["agents"]):
            if entry["kind"] != a.kind:
                raise ValueError(f"checkpoint agent kind {entry['kind']!r} != config {a.kind!r}")
            a.load_state_dict(entry["state"])


def save_checkpoint(ckpt: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(ckpt, f)


def load_checkpoint(path) -> dict:
    with open(path) as f:
        return json.load(f)


def run_experiment(cfg: ExperimentConfig) -> Experiment:
    exp = Experiment(cfg)
    exp.run()
    return exp


# -- summary statistics used by the acceptance checks and scripts ------------

def converged_value(series, tail: int) -> float:
    return float(np.mean(np.asarray(series)[-tail:]))


def iterations_to_fraction(series, fraction: float = 0.9, tail: int = 20) -> int:
    """First iteration whose value reaches ``fraction`` of the tail mean.

    The series is smoothed with a trailing 5-iteration mean first, so a
    single lucky iteration does not count as convergence.
    """
    s = np.asarray(series, dtype=float)
    target = fraction * converged_value(s, tail)
    k = min(5, len(s))
    smooth = np.convolve(s, np.ones(k) / k, mode="full")[:len(s)]
    smooth[:k - 1] = [s[:i + 1].mean() for i in range(k - 1)]
    hits = np.nonzero(smooth >= target)[0]
    return int(hits[0]) if len(hits) else len(s)
