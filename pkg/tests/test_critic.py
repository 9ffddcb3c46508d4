import math

import numpy as np
import pytest

from bsac.bsn import chain_graph, single_node_graph
from bsac.critic import CriticEnsemble, make_critics, polyak_update, q_eval, soft_value
from bsac.errors import ShapeError, UsageError
from bsac.numerics import MlpParams, seeded_rng
from bsac.policy import entropy_estimate, joint_sample, make_joint_policy


def constant_critic(c, in_dim):
    net = MlpParams([np.ones((4, in_dim)), np.zeros((1, 4))], [np.ones(4), np.array([c])])
    return CriticEnsemble(net, net.copy(), net.copy(), net.copy())


def test_fresh_targets_match_online(rng):
    ens = make_critics(3, 2, rng, (16, 16))
    s, a = rng.standard_normal((10, 3)), rng.uniform(-1, 1, (10, 2))
    for k, w in ens.params().items():
        assert np.array_equal(w, ens.target_params()[k])
    assert np.array_equal(
        np.minimum(q_eval(ens, s, a, "q1"), q_eval(ens, s, a, "q2")), q_eval(ens, s, a, "min-target")
    )


def test_min_online_bounds_and_symmetry(rng):
    ens = make_critics(3, 2, rng, (16,))
    s, a = rng.standard_normal((50, 3)), rng.uniform(-1, 1, (50, 2))
    m = q_eval(ens, s, a, "min-online")
    assert np.all(m <= q_eval(ens, s, a, "q1")) and np.all(m <= q_eval(ens, s, a, "q2"))
    swapped = CriticEnsemble(ens.q2, ens.q1, ens.target_q2, ens.target_q1)
    assert np.array_equal(q_eval(swapped, s, a, "min-online"), m)


def test_zero_final_layer_gives_bias():
    ens = constant_critic(1.5, 5)
    ens.q1.weights[-1][:] = 0
    out = q_eval(ens, np.ones((3, 3)), np.ones((3, 2)), "q1")
    assert np.array_equal(out, np.full(3, 1.5))


def test_shape_mismatch(rng):
    ens = make_critics(3, 2, rng, (8,))
    with pytest.raises(ShapeError):
        q_eval(ens, np.zeros((1, 3)), np.zeros((1, 3)))
    with pytest.raises(UsageError):
        q_eval(ens, np.zeros((1, 3)), np.zeros((1, 2)), "q3")


def test_single_critic(rng):
    ens = make_critics(3, 2, rng, (8,), twin=False)
    s, a = np.zeros((2, 3)), np.zeros((2, 2))
    assert np.array_equal(q_eval(ens, s, a, "min-online"), q_eval(ens, s, a, "q1"))
    with pytest.raises(UsageError):
        q_eval(ens, s, a, "q2")
    assert set(ens.params()) == {"q1/W0", "q1/b0", "q1/W1", "q1/b1"}


def test_soft_value_alpha_zero_is_min_target(rng):
    pol = make_joint_policy(chain_graph(2), 3, rng, (8,))
    ens = make_critics(3, 2, rng, (8,))
    s = rng.standard_normal((6, 3))
    noise = pol.draw_noise(rng, 6)
    a = joint_sample(pol, s, noise).action
    assert np.array_equal(soft_value(ens, pol, s, noise, 0.0), q_eval(ens, s, a, "min-target"))
    with pytest.raises(UsageError):
        soft_value(ens, pol, s, noise, -0.1)


def test_soft_value_m1_matches_sac_formula(rng):
    pol = make_joint_policy(single_node_graph(2), 3, rng, (8,))
    ens = make_critics(3, 2, rng, (8,))
    s = rng.standard_normal((6, 3))
    noise = pol.draw_noise(rng, 6)
    smp = joint_sample(pol, s, noise)
    expected = q_eval(ens, s, smp.action, "min-target") - 0.2 * smp.log_prob
    assert np.array_equal(soft_value(ens, pol, s, noise, 0.2), expected)


@pytest.mark.parametrize("graph", [single_node_graph(2), chain_graph(2)], ids=["m1", "m2"])
def test_soft_value_constant_q_matches_entropy(graph):
    rng = seeded_rng(11)
    pol = make_joint_policy(graph, 3, rng, (8,))
    ens = constant_critic(2.0, 5)
    n, alpha = 10_000, 0.3
    state = np.array([0.2, -0.1, 0.4])
    v = soft_value(ens, pol, np.tile(state, (n, 1)), pol.draw_noise(rng, n), alpha)
    h, _ = entropy_estimate(pol, state, 100_000, seeded_rng(12))
    se = v.std() / math.sqrt(n)
    assert abs(v.mean() - (2.0 + alpha / pol.m * h)) < 3 * se


def test_polyak_tau_one_copies(rng):
    ens = make_critics(2, 1, rng, (8,))
    ens.q1.weights[0] += 1.0
    polyak_update(ens, 1.0)
    assert np.array_equal(ens.target_q1.weights[0], ens.q1.weights[0])


def test_polyak_range(rng):
    ens = make_critics(2, 1, rng, (8,))
    for tau in (0.0, -0.1, 1.5):
        with pytest.raises(UsageError):
            polyak_update(ens, tau)


def test_polyak_geometric_decay(rng):
    ens = make_critics(2, 1, rng, (8,), tau=0.005)
    for w in ens.params().values():
        w += rng.standard_normal(w.shape)
    tgt, onl = ens.target_params(), ens.params()

    def gap():
        return max(np.max(np.abs(onl[k] - tgt[k])) for k in onl)

    g0 = gap()
    half = math.ceil(math.log(0.5) / math.log(1 - 0.005))
    for _ in range(half):
        polyak_update(ens)
    assert gap() == pytest.approx(g0 * (1 - 0.005) ** half, rel=1e-9)
    assert gap() <= 0.5 * g0
