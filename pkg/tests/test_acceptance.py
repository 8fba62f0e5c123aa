"""Acceptance gate: learning experiments at desk scale plus the property suites.

Each check appends a line to ``conftest.CRITERIA`` (echoed in the terminal
summary) and prints it immediately, then asserts.
"""
import dataclasses
import functools
import math
import time

import numpy as np
import pytest

from conftest import CRITERIA
from dsarl import neural
from dsarl import reservoir as rc
from dsarl.agents import Experience, QTable, myopic_act, q_learning_update
from dsarl.channel import PropagationParams, draw_rician, path_loss_db, sigma_squared
from dsarl.config import AgentSpec, ExperimentConfig, ScenarioSpec, load_config
from dsarl.environment import TransitionMatrix, sense, step_markov
from dsarl.experiment import Experiment, converged_value, iterations_to_fraction, run_experiment
from dsarl.metrics import emit_csv

pytestmark = pytest.mark.acceptance


def record(capsys, name, ok, detail):
    CRITERIA.append((name, bool(ok), detail))
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@functools.lru_cache(maxsize=None)
def history(config, kind, seed=None):
    cfg = load_config(config)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    cfg = cfg.with_agents(dataclasses.replace(cfg.agents[0], kind=kind))
    return cfg, run_experiment(cfg).history


def series(hist, field):
    return np.array([m.aggregate(field) for m in hist])


def tail_mean(hist, field, n):
    return float(series(hist, field)[-n:].mean())


def test_criterion_1_temporal_correlation(capsys):
    t0 = time.time()
    cfg, rc_hist = history("exp3_temporal_1ch", "dqn_rc")
    _, mlp_hist = history("exp3_temporal_1ch", "dqn_mlp")
    assert cfg.iterations == 200 and cfg.slots_per_iteration == 2000
    # settled behaviour: mean of the last 10 of the 200 iterations
    rc_s, rc_c = tail_mean(rc_hist, "success_rate", 10), tail_mean(rc_hist, "pu_collision_rate", 10)
    ml_s, ml_c = tail_mean(mlp_hist, "success_rate", 10), tail_mean(mlp_hist, "pu_collision_rate", 10)
    rc_ok = rc_s >= 0.60 and rc_c <= 0.05
    mlp_ok = abs(ml_s - 1 / 3) <= 0.05 and abs(ml_c - 2 / 3) <= 0.05
    record(capsys, "1 temporal correlation", rc_ok and mlp_ok,
           f"rc success={rc_s:.3f} (>=0.60) pu={rc_c:.3f} (<=0.05) [{'ok' if rc_ok else 'miss'}]; "
           f"mlp success={ml_s:.3f} (1/3+-0.05) pu={ml_c:.3f} (2/3+-0.05) "
           f"[{'ok' if mlp_ok else 'miss'}]; {time.time() - t0:.0f}s")
    assert rc_ok, "DQN+RC clause"
    assert mlp_ok, "DQN+MLP clause"


def test_criterion_2_multi_su_coexistence(capsys):
    t0 = time.time()
    cfg, rc_hist = history("exp2_6ch_2su", "dqn_rc")
    _, ql_hist = history("exp2_6ch_2su", "qlearning")
    _, my_hist = history("exp2_6ch_2su", "myopic")
    assert cfg.iterations == 500 and cfg.scenario.n_sus == 2
    # converged: the last 50 of the 500 iterations
    rc_su = series(rc_hist, "su_collision_rate")[-50:]
    ql_su = series(ql_hist, "su_collision_rate")[-50:]
    rc_reward = tail_mean(rc_hist, "mean_reward", 50)
    my_reward = tail_mean(my_hist, "mean_reward", 100)
    my_su = series(my_hist, "su_collision_rate")[-100:]
    my_cv = float(my_su.std() / my_su.mean()) if my_su.mean() > 0 else math.inf
    checks = {
        "rc_su": rc_su.mean() <= 0.02,
        "ql_su": ql_su.mean() <= 0.02,
        "reward": rc_reward > my_reward,
        "myopic_cv": my_cv < 0.3,
    }
    record(capsys, "2 multi-SU coexistence", all(checks.values()),
           f"rc su-coll mean={rc_su.mean():.4f} max={rc_su.max():.4f}; "
           f"ql su-coll mean={ql_su.mean():.4f} max={ql_su.max():.4f} (<=0.02); "
           f"reward rc={rc_reward:.3f} > myopic={my_reward:.3f}; "
           f"myopic su-coll={my_su.mean():.4f} std/mean={my_cv:.3f} (<0.3), "
           f"allow_idle={cfg.agents[0].allow_idle}; {time.time() - t0:.0f}s")
    assert all(checks.values()), checks


def test_criterion_3_convergence_speed(capsys):
    t0 = time.time()
    seeds = range(5)
    speed = {"dqn_rc": [], "qlearning": []}
    conv = {"dqn_rc": [], "qlearning": [], "myopic": []}
    for s in seeds:
        for kind in conv:
            cfg, h = history("exp1_desk_10ch", kind, s)
            r = series(h, "mean_reward")
            conv[kind].append(converged_value(r, 50))
            if kind in speed:
                speed[kind].append(iterations_to_fraction(r, 0.9, 50))
    assert cfg.scenario.n_channels == 10 and cfg.scenario.n_sus == 1
    rc_it, ql_it = np.mean(speed["dqn_rc"]), np.mean(speed["qlearning"])
    rc_r, ql_r, my_r = (float(np.mean(conv[k])) for k in ("dqn_rc", "qlearning", "myopic"))
    gap = abs(rc_r - ql_r) / max(abs(rc_r), abs(ql_r))
    checks = {
        "speed": rc_it <= 0.5 * ql_it,
        "similar": gap <= 0.10,
        "beat_myopic": rc_r > my_r and ql_r > my_r,
    }
    record(capsys, "3 convergence speed (10 channels, 5 seeds)", all(checks.values()),
           f"iterations to 90%: rc={rc_it:.1f} ql={ql_it:.1f} ratio={rc_it / max(ql_it, 1e-9):.2f} "
           f"(<=0.5) [{'ok' if checks['speed'] else 'miss'}]; converged reward rc={rc_r:.3f} "
           f"ql={ql_r:.3f} gap={gap:.3f} (<=0.10) [{'ok' if checks['similar'] else 'miss'}]; "
           f"myopic={my_r:.3f} [{'ok' if checks['beat_myopic'] else 'miss'}]; "
           f"{time.time() - t0:.0f}s")
    assert all(checks.values()), checks


# -- criterion 4: property suites ------------------------------------------------


def _a_path_loss():
    p = PropagationParams()
    got = [float(path_loss_db(d, p)) for d in (1.0, 10.0, 100.0)]
    return np.allclose(got, [41.0, 63.7, 86.4], atol=1e-9), f"{got}"


def _b_rician():
    p = PropagationParams()
    g = draw_rician(25.0, p, np.random.default_rng(1), size=1_000_000).gain
    err = abs(g.mean() / sigma_squared(25.0, p) - 1)
    return err < 0.01, f"rel err {err:.4f}"


def _c_markov():
    ms = [TransitionMatrix.from_stay(0.8, 0.2), TransitionMatrix.from_stay(0.95, 0.05)]
    rng = np.random.default_rng(2)
    occ = np.array([1, 0], dtype=np.int8)
    counts = np.zeros((2, 2, 2))
    for _ in range(100_000):
        nxt = step_markov(occ, ms, rng)
        for n in range(2):
            counts[n, occ[n], nxt[n]] += 1
        occ = nxt
    worst = 0.0
    for n, m in enumerate(ms):
        worst = max(worst, abs(counts[n, 1, 1] / counts[n, 1].sum() - m.p11),
                    abs(counts[n, 0, 0] / counts[n, 0].sum() - m.p00))
    return worst < 0.01, f"max abs dev {worst:.4f}"


def _d_sensing():
    occ = np.random.default_rng(3).integers(0, 2, size=(100_000, 4)).astype(np.int8)
    errors = np.array([[0.0, 0.05, 0.1, 0.3]])
    obs = sense(occ, errors, np.random.default_rng(4))[0]
    rates = (obs != occ).mean(axis=0)
    dev = float(np.max(np.abs(rates - errors[0])))
    return dev < 0.01, f"max abs dev {dev:.4f}"


def _fd(loss, w, h=1e-6):
    out = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        out[idx] = (loss(wp) - loss(wm)) / (2 * h)
    return out


def _e_gradients():
    rng = np.random.default_rng(5)
    phi, acts, y = rng.normal(size=(12, 9)), rng.integers(0, 4, 12), rng.normal(size=12)
    w = rng.normal(size=(4, 9))
    g = rc.readout_gradient(phi, acts, y, w)
    fd = _fd(lambda v: rc.readout_loss(phi, acts, y, v), w)
    rel_rc = float(np.max(np.abs(g - fd)) / np.max(np.abs(fd)))

    net = neural.init_mlp(neural.MlpConfig((4, 5, 3), seed=6))
    xs, a, t = rng.normal(size=(7, 4)), rng.integers(0, 3, 7), rng.normal(size=7)
    grads = neural.batch_gradients(net, xs, a, t)

    def loss_with(k, which, v):
        ws, bs = list(net.weights), list(net.biases)
        (ws if which == "w" else bs)[k] = v
        q = neural.forward(neural.MlpWeights(ws, bs), xs)
        return 0.5 * np.mean((q[np.arange(7), a] - t) ** 2)

    rel_mlp = 0.0
    for k in range(len(net.weights)):
        for which, arr, g_an in (("w", net.weights[k], grads[0][k]), ("b", net.biases[k], grads[1][k])):
            fd = _fd(lambda v: loss_with(k, which, v), arr)
            rel_mlp = max(rel_mlp, float(np.max(np.abs(g_an - fd)) / np.max(np.abs(fd))))
    return max(rel_rc, rel_mlp) < 1e-5, f"readout {rel_rc:.1e}, mlp {rel_mlp:.1e}"


def _f_checksum():
    cfg = ExperimentConfig(iterations=3, slots_per_iteration=200,
                           scenario=ScenarioSpec(n_channels=4, n_sus=1))
    exp = Experiment(cfg)
    before = exp.agents[0].pair.evaluation.reservoir.checksum()
    w0 = exp.agents[0].pair.evaluation.w_out.copy()
    exp.run()
    after = exp.agents[0].pair.evaluation.reservoir.checksum()
    trained = not np.array_equal(w0, exp.agents[0].pair.evaluation.w_out)
    return before == after and trained, f"checksum {before[:12]} unchanged, readout trained={trained}"


def _g_q_update():
    t = q_learning_update(QTable(2), Experience(np.array([0]), 1, 1.0, np.array([1])), 0.5, 0.9)
    first = t.get(np.array([0]), 1)
    t2 = QTable(2)
    for _ in range(200):
        t2 = q_learning_update(t2, Experience(np.array([0]), 0, 3.0, np.array([1])), 0.5, 0.9)
    fixed = t2.get(np.array([0]), 0)
    ok = first == pytest.approx(0.5) and fixed == pytest.approx(3.0, abs=1e-9)
    return ok, f"one update {first}, fixed point {fixed:.6f}"


def _h_myopic():
    rng = np.random.default_rng(42)
    bad = 0
    for k in range(1000):
        n = int(rng.integers(1, 9))
        ms = [TransitionMatrix.from_stay(float(a), float(b)) for a, b in zip(rng.random(n), rng.random(n))]
        errors, rates = rng.uniform(0, 0.5, n), rng.uniform(0, 5, n)
        sensed, penalty, idle = rng.integers(0, 2, n), float(rng.uniform(0.5, 4)), bool(k % 2)
        best_a, best_r = 0, None
        for i in range(n):
            g = (1 - errors[i]) if sensed[i] == 1 else errors[i]
            r = g * (ms[i].p11 * rates[i] - ms[i].p10 * penalty) \
                + (1 - g) * (ms[i].p01 * rates[i] - ms[i].p00 * penalty)
            if best_r is None or r > best_r:
                best_a, best_r = i + 1, r
        if idle and best_r <= 0:
            best_a = 0
        bad += myopic_act(sensed, ms, errors, rates, penalty, idle) != best_a
    return bad == 0, f"{1000 - bad}/1000 agree"


def _small_runs(seed=0):
    sc = ScenarioSpec(n_channels=3, n_sus=2)
    for kind in ("dqn_rc", "dqn_mlp", "qlearning", "myopic"):
        cfg = ExperimentConfig(seed=seed, iterations=4, slots_per_iteration=300, scenario=sc,
                               agents=[AgentSpec(kind=kind, batch_size=4)])
        yield kind, run_experiment(cfg).history


def _i_partition():
    worst = 0.0
    runs = list(_small_runs()) + [("exp3", history("exp3_temporal_1ch", "dqn_rc")[1])]
    for _, hist in runs:
        for m in hist:
            total = m.success_rate + m.pu_collision_rate + m.su_collision_rate + m.idle_rate
            worst = max(worst, float(np.max(np.abs(total - 1))))
    return worst < 1e-12, f"max |sum-1| {worst:.1e} over {len(runs)} runs"


def _j_bit_identical(tmp_path):
    same = True
    for (kind, a), (_, b) in zip(_small_runs(7), _small_runs(7)):
        pa, pb = emit_csv(a, tmp_path / f"{kind}_a.csv"), emit_csv(b, tmp_path / f"{kind}_b.csv")
        same &= pa.read_bytes() == pb.read_bytes()
    return same, "repeated seed 7 runs byte-identical for rc, mlp, qlearning, myopic"


def test_criterion_4_property_suites(capsys, tmp_path):
    subs = {"a": _a_path_loss, "b": _b_rician, "c": _c_markov, "d": _d_sensing,
            "e": _e_gradients, "f": _f_checksum, "g": _g_q_update, "h": _h_myopic,
            "i": _i_partition, "j": lambda: _j_bit_identical(tmp_path)}
    results = {k: f() for k, f in subs.items()}
    failed = [k for k, (ok, _) in results.items() if not ok]
    detail = "; ".join(f"({k}) {'ok' if ok else 'FAIL'} {d}" for k, (ok, d) in results.items())
    record(capsys, "4 property suites", not failed, detail)
    assert not failed, failed
