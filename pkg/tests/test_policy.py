import itertools
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import relative_error
from pipedial.acts import ActionVocabulary, DelexAct
from pipedial.policy import (
    BernoulliThresholdPolicy,
    PoissonSetPolicy,
    PpoConfig,
    Transition,
    ValueNet,
    canonical_draws,
    clipped_objective,
    compute_gae,
    imitation_pretrain,
    ppo_update,
    trunc_poisson_log_table,
    trunc_poisson_mean,
)

STATE_DIM = 6


def _vocab(n: int) -> ActionVocabulary:
    return ActionVocabulary(tuple(DelexAct("inform", "hotel", f"s{i}") for i in range(n)))


def _policy(n_acts=4, k_max=3, seed=0, state_dim=STATE_DIM) -> PoissonSetPolicy:
    return PoissonSetPolicy(state_dim, _vocab(n_acts), hidden=(8, 8), k_max=k_max, seed=seed)


def _zeroed(policy):
    for p, _ in policy.parameters():
        p[...] = 0.0
    return policy


def _set_heads(policy, lam: float, probs):
    """Zero encoder; pin lambda and act distribution through head biases."""
    _zeroed(policy)
    policy.lam_head.b[0] = math.log(math.exp(lam) - 1.0)  # softplus inverse
    policy.logit_head.b[...] = np.log(np.asarray(probs))
    return policy


# -- truncated Poisson oracle -------------------------------------------------

def oracle_trunc_logpmf(k: int, lam: float, k_max: int) -> float:
    """Independent pmf-enumeration oracle (direct summation, no logsumexp)."""
    def raw(j):
        return lam**j * math.exp(-lam) / math.factorial(j)

    z = sum(raw(j) for j in range(1, k_max + 1))
    return math.log(raw(k) / z)


def test_trunc_pmf_matches_enumeration_oracle():
    for lam in (0.3, 1.0, 2.0, 5.0, 9.7):
        for k_max in (3, 9):
            table = trunc_poisson_log_table(np.array([lam]), k_max)[0]
            for k in range(1, k_max + 1):
                assert abs(table[k - 1] - oracle_trunc_logpmf(k, lam, k_max)) < 1e-9
            assert abs(np.exp(table).sum() - 1.0) < 1e-12


def test_trunc_mean_matches_enumeration():
    for lam in (0.5, 2.0, 8.0):
        table = np.exp(trunc_poisson_log_table(np.array([lam]), 9)[0])
        expected = sum(k * table[k - 1] for k in range(1, 10))
        assert abs(trunc_poisson_mean(np.array([lam]), 9)[0] - expected) < 1e-12


# -- lambda head ---------------------------------------------------------------

def test_lambda_at_origin_is_ln2():
    policy = _zeroed(_policy())
    s = np.zeros(STATE_DIM)
    assert abs(policy.lambda_of(s) - math.log(2.0)) < 1e-12


def test_lambda_positive_for_random_inputs(rng):
    policy = _policy(seed=3)
    for _ in range(50):
        s = rng.normal(size=STATE_DIM) * 10
        assert policy.lambda_of(s) > 0.0


# -- log_prob ---------------------------------------------------------------------

def test_log_prob_engineered_example():
    # lam=2, per-draw probabilities 0.1 and 0.2; untruncated reference
    # ln(2^2/2! e^-2 * 0.02) = ln(0.04) - 2, truncation renormalizes over [1,k_max]
    policy = _set_heads(_policy(n_acts=4, k_max=9), lam=2.0, probs=[0.1, 0.2, 0.3, 0.4])
    s = np.zeros(STATE_DIM)
    got = policy.log_prob(s, [0, 1])
    raw = math.log(0.04) - 2.0
    z = sum(2.0**j * math.exp(-2.0) / math.factorial(j) for j in range(1, 10))
    expected = raw - math.log(z) + 2.0 - math.log(2.0**2 / 2 * math.exp(-2.0)) + math.log(
        2.0**2 / 2 * math.exp(-2.0)
    )
    # equivalently: count term under the truncated law + act terms
    expected = oracle_trunc_logpmf(2, 2.0, 9) + math.log(0.1) + math.log(0.2)
    assert abs(got - expected) < 1e-9
    assert abs(raw - (-5.2188758248682006)) < 1e-9


def test_log_prob_uniform_logits_single_draw():
    n = 4
    policy = _set_heads(_policy(n_acts=n, k_max=3), lam=1.0, probs=[0.25] * n)
    s = np.zeros(STATE_DIM)
    got = policy.log_prob(s, [2])
    assert abs((got - oracle_trunc_logpmf(1, 1.0, 3)) - math.log(1.0 / n)) < 1e-9


def test_log_prob_rejects_bad_draw_counts():
    policy = _policy(n_acts=4, k_max=3)
    s = np.zeros(STATE_DIM)
    with pytest.raises(ValueError):
        policy.log_prob(s, [])
    with pytest.raises(ValueError):
        policy.log_prob(s, [0, 1, 2, 3])


def test_normalization_brute_force(rng):
    # sum over ALL draw sequences of exp(log_prob) must be 1 (|V|<=4, k_max<=3)
    policy = _policy(n_acts=4, k_max=3, seed=9)
    s = rng.normal(size=STATE_DIM)
    total = 0.0
    for k in (1, 2, 3):
        for seq in itertools.product(range(4), repeat=k):
            total += math.exp(policy.log_prob(s, list(seq)))
    assert abs(total - 1.0) < 1e-6


def test_sequence_sum_equals_trunc_pmf(rng):
    # summing over sequences of one length recovers that length's pmf
    policy = _policy(n_acts=3, k_max=3, seed=4)
    s = rng.normal(size=STATE_DIM)
    lam = policy.lambda_of(s)
    for k in (1, 2, 3):
        total = sum(
            math.exp(policy.log_prob(s, list(seq))) for seq in itertools.product(range(3), repeat=k)
        )
        assert abs(total - math.exp(oracle_trunc_logpmf(k, lam, 3))) < 1e-9


def test_action_sample_log_prob_recomputable(rng):
    policy = _policy(n_acts=6, k_max=5, seed=2)
    for _ in range(20):
        s = rng.normal(size=STATE_DIM)
        sample = policy.act(s, rng)
        assert abs(sample.log_prob - policy.log_prob(s, sample.draws)) < 1e-9
        assert sample.executed == tuple(sorted({policy.vocabulary.act_at(i) for i in sample.draws}))


# -- gradients -----------------------------------------------------------------------

def _fd_check(policy, states, draws_list, weights, probes=10, step=1e-5, tol=1e-4):
    policy.zero_grad()
    policy.accumulate_weighted_grad(states, draws_list, weights)
    analytic = [g.copy() for _, g in policy.parameters()]
    probe_rng = np.random.default_rng(123)

    def objective():
        return float(np.dot(weights, policy.log_prob_batch(states, draws_list)))

    for (p, _), g in zip(policy.parameters(), analytic):
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        idx = probe_rng.choice(flat_p.size, size=min(probes, flat_p.size), replace=False)
        for i in idx:
            old = flat_p[i]
            flat_p[i] = old + step
            up = objective()
            flat_p[i] = old - step
            down = objective()
            flat_p[i] = old
            fd = (up - down) / (2 * step)
            if abs(fd) < 1e-9 and abs(flat_g[i]) < 1e-9:
                continue
            assert relative_error(fd, flat_g[i]) < tol, (fd, flat_g[i])


def test_log_prob_gradient_matches_finite_differences(rng):
    # 10 random parameter points, relative error < 1e-4
    for point in range(10):
        policy = _policy(n_acts=5, k_max=4, seed=100 + point)
        states = rng.normal(size=(3, STATE_DIM))
        draws_list = [tuple(rng.integers(5, size=int(rng.integers(1, 5))).tolist()) for _ in range(3)]
        weights = rng.normal(size=3)
        _fd_check(policy, states, draws_list, weights, probes=6)


def test_bernoulli_gradient_matches_finite_differences(rng):
    policy = BernoulliThresholdPolicy(STATE_DIM, _vocab(5), hidden=(8, 8), seed=1)
    states = rng.normal(size=(3, STATE_DIM))
    draws_list = [tuple(sorted(set(rng.integers(5, size=2).tolist()))) or (0,) for _ in range(3)]
    weights = rng.normal(size=3)
    _fd_check(policy, states, draws_list, weights, probes=8)


def test_value_net_gradient_matches_finite_differences(rng):
    value_net = ValueNet(STATE_DIM, hidden=7, seed=5)
    states = rng.normal(size=(4, STATE_DIM))
    targets = rng.normal(size=4)

    def loss():
        out, _ = value_net.forward(states)
        return float(np.mean((out - targets) ** 2))

    value_net.zero_grad()
    out, cache = value_net.forward(states)
    value_net.net.backward(cache, (2.0 * (out - targets) / len(targets))[:, None])
    analytic = [g.copy() for _, g in value_net.parameters()]
    probe_rng = np.random.default_rng(7)
    for (p, _), g in zip(value_net.parameters(), analytic):
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        idx = probe_rng.choice(flat_p.size, size=min(10, flat_p.size), replace=False)
        for i in idx:
            old = flat_p[i]
            flat_p[i] = old + 1e-5
            up = loss()
            flat_p[i] = old - 1e-5
            down = loss()
            flat_p[i] = old
            fd = (up - down) / 2e-5
            if abs(fd) < 1e-10 and abs(flat_g[i]) < 1e-10:
                continue
            assert relative_error(fd, flat_g[i]) < 1e-4


# -- sampling ----------------------------------------------------------------------

def test_sampling_k_floor_when_lambda_tiny():
    policy = _policy(n_acts=4, k_max=5)
    _zeroed(policy)
    policy.lam_head.b[0] = -40.0  # lambda ~ 0: truncated mass collapses to k=1
    rng = np.random.default_rng(0)
    s = np.zeros(STATE_DIM)
    for _ in range(50):
        assert policy.act(s, rng).k == 1


def test_sampling_saturated_logit():
    policy = _zeroed(_policy(n_acts=4, k_max=5))
    policy.logit_head.b[2] = 1e6
    rng = np.random.default_rng(0)
    sample = policy.act(np.zeros(STATE_DIM), rng)
    assert set(sample.draws) == {2}


def test_sampling_count_distribution_chi_squared():
    # 100,000 seeded samples at lambda=2, k_max=9 vs the analytic pmf
    policy = _set_heads(_policy(n_acts=4, k_max=9), lam=2.0, probs=[0.25] * 4)
    s = np.zeros(STATE_DIM)
    lam, count_pmf, _ = policy.act_distributions(s)
    rng = np.random.default_rng(42)
    ks = rng.choice(9, p=count_pmf, size=100_000) + 1
    observed = np.bincount(ks, minlength=10)[1:]
    result = chisquare(observed, 100_000 * count_pmf)
    assert result.pvalue > 0.01


def test_sampling_importance_identity(rng):
    # avg of exp(log_prob)/true sequence probability = 1 within 1%
    policy = _set_heads(_policy(n_acts=4, k_max=3), lam=1.5, probs=[0.1, 0.2, 0.3, 0.4])
    s = np.zeros(STATE_DIM)
    probs = [0.1, 0.2, 0.3, 0.4]
    ratios = []
    for _ in range(10_000):
        sample = policy.act(s, rng)
        true = math.exp(oracle_trunc_logpmf(sample.k, 1.5, 3))
        for d in sample.draws:
            true *= probs[d]
        ratios.append(math.exp(sample.log_prob) / true)
    assert abs(np.mean(ratios) - 1.0) < 0.01


def test_greedy_decode_topk():
    policy = _set_heads(_policy(n_acts=4, k_max=9), lam=3.0, probs=[0.4, 0.3, 0.2, 0.1])
    sample = policy.greedy(np.zeros(STATE_DIM))
    table = np.exp(trunc_poisson_log_table(np.array([3.0]), 9))[0]
    assert sample.k == int(np.argmax(table)) + 1
    assert list(sample.draws) == list(range(sample.k))  # highest-probability acts first


# -- PPO ------------------------------------------------------------------------------

def _bandit_trajectories(policy, value_net, rng, n=256, rewarded=2):
    s = np.zeros(STATE_DIM)
    trajectories = []
    for _ in range(n):
        sample = policy.act(s, rng)
        reward = 1.0 if all(d == rewarded for d in sample.draws) else -1.0
        trajectories.append(
            [Transition(state=s, sample=sample, reward=reward, done=True, value=value_net.value(s))]
        )
    return trajectories


def test_ppo_zero_advantages_leave_policy_unchanged(rng):
    policy = _policy(n_acts=4, k_max=3, seed=11)
    value_net = ValueNet(STATE_DIM, hidden=7, seed=3)
    # rewards exactly equal the value estimates => advantages identically zero
    s = np.zeros(STATE_DIM)
    v = value_net.value(s)
    trajectories = [
        [Transition(state=s, sample=policy.act(s, rng), reward=v, done=True, value=v)]
        for _ in range(32)
    ]
    before = [p.copy() for p, _ in policy.parameters()]
    ppo_update(policy, value_net, trajectories, PpoConfig(epochs=2, minibatch=16), rng)
    for (p, _), saved in zip(policy.parameters(), before):
        assert np.allclose(p, saved, atol=1e-12)


def test_clipped_objective_arithmetic():
    # ratio 1.5 with positive advantage clips to (1+eps)*A
    assert clipped_objective(np.array([1.5]), np.array([2.0]), 0.2)[0] == pytest.approx(1.2 * 2.0)
    # inside the band the raw ratio passes through
    assert clipped_objective(np.array([1.1]), np.array([2.0]), 0.2)[0] == pytest.approx(2.2)
    # negative advantage: min picks the unclipped branch when ratio grows
    assert clipped_objective(np.array([1.5]), np.array([-1.0]), 0.2)[0] == pytest.approx(-1.5)


def test_gae_hand_computed():
    # oracle: hand-rolled recursion on a 3-step trajectory
    gamma, lam = 0.9, 0.8
    rewards = [1.0, 0.0, 2.0]
    values = [0.5, 0.4, 0.3]
    trajectory = [
        Transition(state=np.zeros(1), sample=None, reward=rewards[i], done=(i == 2), value=values[i])
        for i in range(3)
    ]
    compute_gae(trajectory, gamma, lam)
    d2 = 2.0 - 0.3
    d1 = 0.0 + 0.9 * 0.3 - 0.4
    d0 = 1.0 + 0.9 * 0.4 - 0.5
    a2 = d2
    a1 = d1 + 0.9 * 0.8 * a2
    a0 = d0 + 0.9 * 0.8 * a1
    assert trajectory[0].advantage == pytest.approx(a0)
    assert trajectory[1].advantage == pytest.approx(a1)
    assert trajectory[2].advantage == pytest.approx(a2)
    assert trajectory[0].ret == pytest.approx(a0 + 0.5)


def test_ppo_bandit_smoke(rng):
    # single-seed version of the acceptance criterion
    policy = _policy(n_acts=4, k_max=3, seed=0)
    value_net = ValueNet(STATE_DIM, hidden=7, seed=0)
    config = PpoConfig(lr=3e-3, epochs=4, minibatch=64)
    s = np.zeros(STATE_DIM)
    for update in range(60):
        trajectories = _bandit_trajectories(policy, value_net, rng, n=128)
        ppo_update(policy, value_net, trajectories, config, rng)
        if policy.act_distributions(s)[2][2] > 0.9:
            break
    assert policy.act_distributions(s)[2][2] > 0.9


def test_ppo_abort_on_nonfinite(rng):
    policy = _policy(n_acts=4, k_max=3, seed=1)
    value_net = ValueNet(STATE_DIM, hidden=7, seed=1)
    s = np.zeros(STATE_DIM)
    sample = policy.act(s, rng)
    trajectories = [[Transition(state=s, sample=sample, reward=float("nan"), done=True, value=0.0)]]
    before = [p.copy() for p, _ in policy.parameters()]
    diag = ppo_update(policy, value_net, trajectories, PpoConfig(), rng)
    assert diag["aborted"]
    for (p, _), saved in zip(policy.parameters(), before):
        assert np.array_equal(p, saved)


# -- imitation ----------------------------------------------------------------------

def test_imitation_zero_steps_noop(rng):
    policy = _policy(seed=2)
    demos = [(np.zeros(STATE_DIM), frozenset({policy.vocabulary.act_at(0)}))]
    before = [p.copy() for p, _ in policy.parameters()]
    imitation_pretrain(policy, demos, 0, rng)
    for (p, _), saved in zip(policy.parameters(), before):
        assert np.array_equal(p, saved)


def test_imitation_reaches_analytic_maximum(rng):
    # one demo of size 2 repeated: optimum is lambda maximizing trunc pmf at 2
    # and the categorical uniform over the two demoed acts
    k_max = 3
    policy = _policy(n_acts=4, k_max=k_max, seed=6)
    vocab = policy.vocabulary
    demo_set = frozenset({vocab.act_at(0), vocab.act_at(3)})
    demos = [(np.zeros(STATE_DIM), demo_set)]
    imitation_pretrain(policy, demos, 1200, rng, lr=5e-2)

    lams = np.linspace(0.01, 12.0, 4000)
    best_count = max(oracle_trunc_logpmf(2, lam, k_max) for lam in lams)
    analytic_max = best_count + 2 * math.log(0.5)
    achieved = policy.log_prob(np.zeros(STATE_DIM), canonical_draws(demo_set, vocab))
    assert achieved >= analytic_max - 0.1
    assert achieved <= analytic_max + 1e-6


def test_imitation_rejects_oversized_demo(rng):
    policy = _policy(n_acts=4, k_max=2)
    demos = [(np.zeros(STATE_DIM), frozenset(policy.vocabulary))]  # 4 acts > k_max
    with pytest.raises(ValueError):
        imitation_pretrain(policy, demos, 1, rng)


def test_canonical_draw_order(world):
    vocab = world.system_vocab
    acts = {vocab.act_at(5), vocab.act_at(1), vocab.act_at(9)}
    assert canonical_draws(acts, vocab) == (1, 5, 9)
