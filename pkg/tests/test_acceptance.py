"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Criteria 6 and 8 train for hundreds of thousands of steps and take hours on a
single core.  Set ``BSAC_SKIP_LONG=1`` to skip them during development.

Run standalone with ``python tests/test_acceptance.py`` or through pytest; in
both cases a summary line per criterion is printed at the end.
"""

from __future__ import annotations

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from bsac import numerics as nx
from bsac.agent import (
    Agent, AgentConfig, critic_target, make_buffer, policy_loss_var, train_step,
)
from bsac.bsn import chain_graph, load_bsn, parse_bsn, single_node_graph
from bsac.config import load_config
from bsac.critic import q_eval
from bsac.envs import QuadraticBandit, make_env
from bsac.harness import DATA_DIR, run, summarize
from bsac.numerics import MlpParams, Tape, seeded_rng
from bsac.policy import JointPolicy, SubPolicy, entropy_estimate, joint_log_prob, joint_sample
from bsac.replay import Batch
from bsac.sac import FlatSacAgent

RESULTS: dict[int, tuple[bool, str]] = {}
LONG = pytest.mark.skipif(os.environ.get("BSAC_SKIP_LONG") == "1", reason="BSAC_SKIP_LONG=1")


def record(n: int, ok: bool, detail: str):
    RESULTS[n] = (ok, detail)
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def summary_lines() -> list[str]:
    lines = []
    for n in range(1, 9):
        if n in RESULTS:
            ok, detail = RESULTS[n]
            lines.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        else:
            lines.append(f"criterion {n}: NOT RUN")
    return lines


# 1 -------------------------------------------------------------------------


def test_c1_sac_equivalence_keystone():
    t0 = time.perf_counter()
    env_a = make_env("chain-reacher", {"k": 2})
    env_b = make_env("chain-reacher", {"k": 2})
    cfg = AgentConfig()
    sac = FlatSacAgent.create(env_a.spec, cfg, seeded_rng(0))
    bsac = Agent.create(single_node_graph(2), env_b.spec, cfg, seeded_rng(0))
    buf_a, buf_b = make_buffer(env_a.spec, cfg), make_buffer(env_b.spec, cfg)
    rng_a, rng_b = seeded_rng(1), seeded_rng(1)
    worst, updates = 0.0, 0
    while updates < 1000:
        ma = train_step(sac, env_a, buf_a, rng_a)
        mb = train_step(bsac, env_b, buf_b, rng_b)
        assert (ma is None) == (mb is None)
        if ma is None:
            continue
        updates += 1
        worst = max(worst, abs(ma.critic_loss - mb.critic_loss), abs(ma.policy_loss - mb.policy_loss))
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-9 and elapsed < 120,
           f"max |loss diff| over 1000 updates = {worst:.3g} (<= 1e-9), {elapsed:.0f}s (< 120s)")


# 2 -------------------------------------------------------------------------


def _fd(f, params, h=1e-5):
    out = {}
    for key, p in params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = f()
            flat[i] = old - h
            down = f()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        out[key] = g
    return out


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)


def test_c2_gradient_fidelity():
    t0 = time.perf_counter()
    env = make_env("chain-reacher", {"k": 2})
    cfg = AgentConfig(hidden_sizes=(8, 8), batch_size=16, warmup_steps=16)
    worst = 0.0
    for point in range(20):
        rng = seeded_rng(100 + point)
        agent = Agent.create(chain_graph(2), env.spec, cfg, rng)
        # move away from the symmetric init so every parameter matters
        for group in (agent.policy.params(), agent.critics.params()):
            for w in group.values():
                w += 0.3 * rng.standard_normal(w.shape)
        polyak_copy = agent.critics.target_params()
        for k, w in agent.critics.params().items():
            polyak_copy[k][...] = w + 0.1 * rng.standard_normal(w.shape)
        b = Batch(rng.standard_normal((16, 6)), rng.uniform(-0.9, 0.9, (16, 2)),
                  rng.standard_normal(16), rng.standard_normal((16, 6)),
                  (rng.uniform(size=16) < 0.2).astype(float))
        noise = agent.policy.draw_noise(rng, 16)
        y = critic_target(agent, b, noise=agent.policy.draw_noise(rng, 16))

        def critic_loss(tape=None):
            q1 = q_eval(agent.critics, b.states, b.actions, "q1", tape)
            q2 = q_eval(agent.critics, b.states, b.actions, "q2", tape)
            if tape is None:
                return float(np.mean((q1 - y) ** 2) + np.mean((q2 - y) ** 2))
            return nx.mean(nx.square(q1 - y)) + nx.mean(nx.square(q2 - y))

        def policy_loss(tape=None):
            loss, _ = policy_loss_var(agent, b.states, noise, tape if tape is not None else Tape())
            return loss if tape is not None else float(loss.value)

        for fn, params in ((critic_loss, agent.critics.params()), (policy_loss, agent.policy.params())):
            tape = Tape()
            analytic = tape.backward(fn(tape))
            numeric = _fd(fn, params)
            worst = max(worst, max(_rel(analytic[k], numeric[k]) for k in params))
    elapsed = time.perf_counter() - t0
    record(2, worst < 1e-4 and elapsed < 60,
           f"worst relative error over 20 points = {worst:.2e} (< 1e-4), {elapsed:.0f}s (< 60s)")


# 3 -------------------------------------------------------------------------


def _linear_sub(nid, w_mu, b_mu, log_std, in_dim, parent_dim=0):
    d = len(b_mu)
    w = np.zeros((2 * d, in_dim))
    w[:d] = w_mu
    return SubPolicy(nid, MlpParams([w], [np.concatenate([b_mu, log_std])], "identity"),
                     d, parent_dim, squash=False)


def test_c3_chain_rule_density_oracle():
    rng = seeded_rng(3)
    graph = parse_bsn("node x dims 0\nnode y dims 1 parents x\n")
    worst_log, worst_dens = 0.0, 0.0
    for _ in range(10):
        # x | s ~ N(c0 + c1 s, sx^2);  y | s, x ~ N(d0 + d1 s + b x, sy^2)
        c0, c1, d0, d1, b = rng.uniform(-1, 1, 5)
        lsx, lsy = rng.uniform(-1.0, 0.5, 2)
        sub_x = _linear_sub("x", np.array([[c1]]), np.array([c0]), np.array([lsx]), 1)
        sub_y = _linear_sub("y", np.array([[d1, b]]), np.array([d0]), np.array([lsy]), 2, 1)
        pol = JointPolicy(graph, {"x": sub_x, "y": sub_y})
        s = rng.uniform(-1, 1, (100, 1))
        a = rng.normal(0, 1.5, (100, 2))
        got = joint_log_prob(pol, s, a)
        sx2, sy2 = math.exp(2 * lsx), math.exp(2 * lsy)
        cov = np.array([[sx2, b * sx2], [b * sx2, b * b * sx2 + sy2]])
        for i in range(100):
            mx = c0 + c1 * s[i, 0]
            mean = [mx, d0 + d1 * s[i, 0] + b * mx]
            ref = stats.multivariate_normal(mean, cov).logpdf(a[i])
            worst_log = max(worst_log, abs(got[i] - ref))
            worst_dens = max(worst_dens, abs(math.exp(got[i]) - math.exp(ref)))
    record(3, worst_log < 1e-6 and worst_dens < 1e-6,
           f"1000 points: max |log-density diff| = {worst_log:.2e}, "
           f"max |density diff| = {worst_dens:.2e} (< 1e-6)")


# 4 -------------------------------------------------------------------------


def test_c4_entropy_additivity():
    graph = parse_bsn("node x dims 0,1\nnode y dims 2 parents x\n")
    # x ~ N(mu_x, diag(e^{2 l})); y | x has log-std linear in x, so
    # H = H(x) + E[H(y|x)] is closed-form.
    lx = np.array([-0.4, 0.3])
    mu_x = np.array([0.2, -0.5])
    sub_x = _linear_sub("x", np.zeros((2, 1)), mu_x, lx, 1)
    wy = np.zeros((2, 3))
    wy[0, 1:] = [0.7, -0.2]
    wy[1, 1:] = [0.25, 0.4]  # log-std slope on the parent coordinates
    sub_y = SubPolicy("y", MlpParams([wy], [np.array([0.1, -0.6])], "identity"), 1, 2, squash=False)
    pol = JointPolicy(graph, {"x": sub_x, "y": sub_y})
    n = 100_000
    rng = seeded_rng(4)
    joint, per_node = entropy_estimate(pol, np.zeros(1), n, rng)
    exact_additive = joint == per_node["x"] + per_node["y"]
    # independent re-check of additivity from the raw shared samples
    smp = joint_sample(pol, np.zeros((n, 1)), pol.draw_noise(seeded_rng(5), n))
    joint_direct = -float(np.mean(smp.log_prob))
    nodes_direct = -float(np.mean(smp.node_log_probs["x"])) - float(np.mean(smp.node_log_probs["y"]))
    half = 0.5 * math.log(2 * math.pi * math.e)
    analytic = 3 * half + lx.sum() + (-0.6 + 0.25 * mu_x[0] + 0.4 * mu_x[1])
    se = float(np.std(smp.log_prob)) / math.sqrt(n)
    joint2, _ = entropy_estimate(pol, np.zeros(1), n, seeded_rng(5))
    close = abs(joint2 - analytic) < 3 * se
    ok = exact_additive and abs(joint_direct - nodes_direct) < 1e-12 and close
    record(4, ok, f"joint == sum of nodes exactly: {exact_additive}; "
                  f"|estimate - analytic| = {abs(joint2 - analytic):.4f} vs 3 SE = {3 * se:.4f}")


# 5 -------------------------------------------------------------------------

BANDIT_STEPS = 20_000
BANDIT_CONFIG = AgentConfig(alpha=0.2, gamma=0.0, hidden_sizes=(64, 64))


def _train_bandit(make_agent):
    env = QuadraticBandit(2, a_star=[0.3, -0.4])
    rng = seeded_rng(0)
    agent = make_agent(env, rng)
    buf = make_buffer(env.spec, BANDIT_CONFIG)
    for _ in range(BANDIT_STEPS):
        train_step(agent, env, buf, rng)
    return env, agent


def _bandit_stats(agent, sampler, n=100_000):
    a = sampler(agent, np.zeros((n, 1)), seeded_rng(55))
    return a.mean(axis=0), a.std(axis=0)


def test_c5_boltzmann_optimum():
    from bsac.sac import sample as sac_sample

    t0 = time.perf_counter()
    target_std = math.sqrt(0.2 / 2)
    lines, ok = [], True
    chain2 = load_bsn("bandit2-chain.bsn")
    runs = {
        "flat SAC": (
            lambda env, rng: FlatSacAgent.create(env.spec, BANDIT_CONFIG, rng),
            lambda ag, s, r: sac_sample(ag.policy, s, r.standard_normal((len(s), 2)))[0].value,
        ),
        "2-node BSAC": (
            lambda env, rng: Agent.create(chain2, env.spec, BANDIT_CONFIG, rng),
            lambda ag, s, r: joint_sample(ag.policy, s, ag.policy.draw_noise(r, len(s))).action,
        ),
    }
    for name, (make, sampler) in runs.items():
        env, agent = _train_bandit(make)
        mean, std = _bandit_stats(agent, sampler)
        mean_err = np.max(np.abs(mean - env.a_star))
        std_err = np.max(np.abs(std / target_std - 1))
        this_ok = mean_err <= 0.05 and std_err <= 0.2
        ok &= this_ok
        lines.append(f"{name}: mean err {mean_err:.3f}, std {np.round(std, 3).tolist()} "
                     f"({100 * std_err:.0f}% off {target_std:.3f})")
    elapsed = time.perf_counter() - t0
    record(5, ok and elapsed < 300, "; ".join(lines) + f"; {elapsed:.0f}s (< 300s)")


def test_c5b_bsac_matches_its_own_entropy_weighted_optimum():
    """Companion check: with (alpha/m) weighting the per-coordinate optimum std is sqrt(alpha/(2m))."""
    env, agent = _train_bandit(
        lambda env, rng: Agent.create(load_bsn("bandit2-chain.bsn"), env.spec, BANDIT_CONFIG, rng))
    a = joint_sample(agent.policy, np.zeros((100_000, 1)),
                     agent.policy.draw_noise(seeded_rng(56), 100_000)).action
    expected = math.sqrt(0.2 / (2 * agent.m))
    assert np.max(np.abs(a.mean(axis=0) - env.a_star)) <= 0.05
    assert np.max(np.abs(a.std(axis=0) / expected - 1)) <= 0.2


# 6 -------------------------------------------------------------------------


@LONG
def test_c6_directional_efficiency(tmp_path):
    t0 = time.perf_counter()
    configs = [load_config(DATA_DIR / "reacher4-flat.cfg"), load_config(DATA_DIR / "reacher4-chain.cfg")]
    records = []
    for cfg in configs:
        records += run(cfg, out_dir=tmp_path)
    sac, bsac = summarize(records, configs[0].threshold)
    inf = math.inf
    sac_med = inf if sac.median_steps is None else sac.median_steps
    bsac_med = inf if bsac.median_steps is None else bsac.median_steps
    elapsed = time.perf_counter() - t0
    detail = (f"median steps-to-threshold BSAC {bsac.median_steps or 'not reached'} "
              f"({bsac.reached}/5 seeds) vs SAC {sac.median_steps or 'not reached'} "
              f"({sac.reached}/5); {elapsed / 60:.0f} min (< 30 min)")
    if bsac.reached == sac.reached == 0:
        detail += " (vacuous: neither config reached the threshold)"
    ok = bsac_med <= sac_med and elapsed < 1800
    RESULTS[6] = (ok, detail + ("" if ok else " [non-blocking]"))
    print(f"\ncriterion 6: {'PASS' if ok else 'FAIL'} - {RESULTS[6][1]}")
    if not ok:
        pytest.xfail("criterion 6 is non-blocking: " + detail)


# 7 -------------------------------------------------------------------------


def test_c7_config_fidelity():
    expected = {
        "hopper3p.bsn": {"t1": [], "t2": ["t1"], "t3": ["t2"]},
        "walker5p.bsn": {"t1": [], "t2": ["t1"], "t3": ["t1"], "t4": ["t2"], "t5": ["t3"]},
        "humanoid5p.bsn": {"t1": [], "t2": ["t1"], "t3": ["t1"], "t4": ["t1"], "t5": ["t1"]},
    }
    got = {name: load_bsn(name).parents() for name in expected}
    record(7, got == expected, "; ".join(f"{k}: {v}" for k, v in got.items()))


# 8 -------------------------------------------------------------------------

SMOKE_CONFIGS = ["quadratic-bandit.cfg", "chain-reacher.cfg"]


def _csv_finite(path: Path) -> tuple[int, int]:
    import csv

    rows = bad = 0
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows += 1
            vals = [float(v) for k, v in row.items() if k != "step" and v != ""]
            bad += not all(math.isfinite(v) for v in vals)
    return rows, bad


@LONG
def test_c8_stability_smoke(tmp_path):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in SMOKE_CONFIGS:
        cfg = load_config(DATA_DIR / name)
        assert cfg.agent == AgentConfig() and cfg.total_steps == 100_000
        err = None
        try:
            (rec,) = run(cfg, out_dir=tmp_path, seeds=[0])
            rows, bad = _csv_finite(Path(rec.checkpoint).parent / "metrics.csv")
        except Exception as exc:  # noqa: BLE001 - reported, then fails the criterion
            err, rows, bad = f"{type(exc).__name__}: {exc}", 0, 0
        ok &= err is None and bad == 0 and rows > 0
        parts.append(f"{cfg.env} ({cfg.bsn}): {rows} metric rows, {bad} non-finite"
                     + (f", error {err}" if err else ""))
    record(8, ok, "; ".join(parts) + f"; {(time.perf_counter() - t0) / 60:.0f} min")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
