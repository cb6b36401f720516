"""Stochastic dialog policy over variable-size sets of delexicalized acts.

The count of acts per turn is drawn from a Poisson truncated to [1, k_max]
(renormalized pmf used consistently in sampling and likelihood); the acts
themselves are independent categorical draws.  Gradients are hand-derived:
for the count head  d log pmf / d lambda = (k - E_trunc[k]) / lambda,  and
for the act head    d log prob / d logits = counts - k * softmax(logits).

Also hosts the Bernoulli-threshold baseline head, the value network, PPO
with GAE, and imitation pretraining.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .acts import ActionVocabulary, DelexAct
from .nets import MLP, Adam, Linear, RMSprop, log_softmax, sigmoid, softmax

K_MAX = 9


# -- truncated Poisson ------------------------------------------------------

def trunc_poisson_log_table(lam: np.ndarray, k_max: int = K_MAX) -> np.ndarray:
    """Log pmf over k = 1..k_max for each lambda; rows sum to 1 in prob space."""
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    lam = np.maximum(lam, 1e-300)
    ks = np.arange(1, k_max + 1, dtype=np.float64)
    log_raw = ks[None, :] * np.log(lam)[:, None] - lam[:, None] - gammaln(ks + 1)[None, :]
    return log_raw - logsumexp(log_raw, axis=1, keepdims=True)


def trunc_poisson_logpmf(k, lam, k_max: int = K_MAX):
    table = trunc_poisson_log_table(np.atleast_1d(lam), k_max)
    k = np.atleast_1d(k)
    out = table[np.arange(len(k)), np.asarray(k) - 1]
    return out if out.size > 1 else float(out[0])


def trunc_poisson_mean(lam, k_max: int = K_MAX) -> np.ndarray:
    table = np.exp(trunc_poisson_log_table(lam, k_max))
    return table @ np.arange(1, k_max + 1, dtype=np.float64)


# -- samples and transitions -------------------------------------------------

@dataclass
class ActionSample:
    k: int
    draws: tuple[int, ...]
    log_prob: float
    executed: tuple[DelexAct, ...]


@dataclass
class Transition:
    state: np.ndarray
    sample: ActionSample
    reward: float
    done: bool
    value: float
    advantage: float | None = None
    ret: float | None = None


def _pad_draws(draws_list, k_max: int):
    lens = np.array([len(d) for d in draws_list], dtype=np.int64)
    if lens.min() < 1 or lens.max() > k_max:
        raise ValueError(f"draw counts must lie in [1, {k_max}]")
    padded = np.zeros((len(draws_list), k_max), dtype=np.int64)
    for i, draws in enumerate(draws_list):
        padded[i, : len(draws)] = draws
    mask = np.arange(k_max)[None, :] < lens[:, None]
    return padded, lens, mask


class PoissonSetPolicy:
    """Encoder MLP with a softplus count head and a categorical act head."""

    def __init__(self, state_dim: int, vocabulary: ActionVocabulary,
                 hidden: tuple[int, int] = (100, 100), k_max: int = K_MAX, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x90C1)))
        self.state_dim = state_dim
        self.vocabulary = vocabulary
        self.k_max = k_max
        self.encoder = MLP([state_dim, hidden[0], hidden[1]], rng)
        self.lam_head = Linear(hidden[1], 1, rng)
        self.logit_head = Linear(hidden[1], len(vocabulary), rng)
        self.stochastic_collection = True

    # -- plumbing -----------------------------------------------------------
    def parameters(self):
        return self.encoder.parameters() + self.lam_head.parameters() + self.logit_head.parameters()

    def zero_grad(self) -> None:
        self.encoder.zero_grad()
        self.lam_head.zero_grad()
        self.logit_head.zero_grad()

    def clone(self) -> "PoissonSetPolicy":
        return copy.deepcopy(self)

    # -- forward ------------------------------------------------------------
    def _heads(self, states: np.ndarray):
        h, cache = self.encoder.forward(states)
        # ReLU between encoder output and heads keeps the two hidden layers
        # of the MLP nonlinear end to end
        act = np.maximum(h, 0.0)
        z = self.lam_head.forward(act)[:, 0]
        lam = np.logaddexp(0.0, z)
        logits = self.logit_head.forward(act)
        return lam, z, logits, (cache, h, act)

    def lambda_of(self, state: np.ndarray) -> float:
        lam, _, _, _ = self._heads(np.asarray(state, dtype=np.float64)[None, :])
        return float(lam[0])

    def act_distributions(self, state: np.ndarray):
        lam, _, logits, _ = self._heads(np.asarray(state, dtype=np.float64)[None, :])
        count_pmf = np.exp(trunc_poisson_log_table(lam, self.k_max))[0]
        return float(lam[0]), count_pmf, softmax(logits[0])

    # -- likelihood ----------------------------------------------------------
    def log_prob_batch(self, states: np.ndarray, draws_list) -> np.ndarray:
        padded, lens, mask = _pad_draws(draws_list, self.k_max)
        lam, _, logits, _ = self._heads(states)
        count_term = trunc_poisson_log_table(lam, self.k_max)[np.arange(len(lens)), lens - 1]
        logp_acts = log_softmax(logits, axis=1)
        picked = np.take_along_axis(logp_acts, padded, axis=1)
        act_term = (picked * mask).sum(axis=1)
        return count_term + act_term

    def log_prob(self, state: np.ndarray, draws) -> float:
        return float(self.log_prob_batch(np.asarray(state, dtype=np.float64)[None, :], [tuple(draws)])[0])

    def accumulate_weighted_grad(self, states: np.ndarray, draws_list, weights: np.ndarray) -> None:
        """Add the gradient of sum_i weights[i] * log_prob_i to the buffers."""
        padded, lens, mask = _pad_draws(draws_list, self.k_max)
        lam, z, logits, (cache, h, act) = self._heads(states)
        w = np.asarray(weights, dtype=np.float64)

        mean_k = trunc_poisson_mean(lam, self.k_max)
        dlam = (lens - mean_k) / lam
        dz = (w * dlam * sigmoid(z))[:, None]

        probs = softmax(logits, axis=1)
        counts = np.zeros_like(probs)
        rows = np.repeat(np.arange(len(lens)), lens)
        cols = np.concatenate([np.asarray(d, dtype=np.int64) for d in draws_list])
        np.add.at(counts, (rows, cols), 1.0)
        dlogits = w[:, None] * (counts - lens[:, None] * probs)

        dact = self.lam_head.backward(act, dz) + self.logit_head.backward(act, dlogits)
        dh = dact * (h > 0.0)
        self.encoder.backward(cache, dh)

    # -- acting ---------------------------------------------------------------
    def act(self, state: np.ndarray, rng: np.random.Generator) -> ActionSample:
        lam, count_pmf, act_probs = self.act_distributions(state)
        k = int(rng.choice(self.k_max, p=count_pmf)) + 1
        draws = tuple(int(i) for i in rng.choice(len(act_probs), size=k, p=act_probs, replace=True))
        return self._finish(state, draws)

    def greedy(self, state: np.ndarray) -> ActionSample:
        """Mode of the count law, then top-k acts without replacement."""
        _, count_pmf, act_probs = self.act_distributions(state)
        k = int(np.argmax(count_pmf)) + 1
        draws = tuple(int(i) for i in np.argsort(-act_probs)[:k])
        return self._finish(state, draws)

    def _finish(self, state, draws) -> ActionSample:
        executed = tuple(sorted({self.vocabulary.act_at(i) for i in draws}))
        return ActionSample(
            k=len(draws),
            draws=draws,
            log_prob=self.log_prob(state, draws),
            executed=executed,
        )


class BernoulliThresholdPolicy:
    """Baseline head: independent per-act Bernoulli with deterministic 0.5
    thresholding at collection time (the parameterization the count head
    replaces)."""

    def __init__(self, state_dim: int, vocabulary: ActionVocabulary,
                 hidden: tuple[int, int] = (100, 100), k_max: int = K_MAX, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xBE77)))
        self.state_dim = state_dim
        self.vocabulary = vocabulary
        self.k_max = k_max
        self.encoder = MLP([state_dim, hidden[0], hidden[1]], rng)
        self.head = Linear(hidden[1], len(vocabulary), rng)
        self.stochastic_collection = False

    def parameters(self):
        return self.encoder.parameters() + self.head.parameters()

    def zero_grad(self) -> None:
        self.encoder.zero_grad()
        self.head.zero_grad()

    def clone(self) -> "BernoulliThresholdPolicy":
        return copy.deepcopy(self)

    def _probs(self, states: np.ndarray):
        h, cache = self.encoder.forward(states)
        act = np.maximum(h, 0.0)
        logits = self.head.forward(act)
        return sigmoid(logits), (cache, h, act)

    def _vectors(self, draws_list) -> np.ndarray:
        x = np.zeros((len(draws_list), len(self.vocabulary)))
        for i, draws in enumerate(draws_list):
            x[i, list(draws)] = 1.0
        return x

    def log_prob_batch(self, states: np.ndarray, draws_list) -> np.ndarray:
        probs, _ = self._probs(states)
        p = np.clip(probs, 1e-12, 1.0 - 1e-12)
        x = self._vectors(draws_list)
        return (x * np.log(p) + (1.0 - x) * np.log(1.0 - p)).sum(axis=1)

    def log_prob(self, state: np.ndarray, draws) -> float:
        return float(self.log_prob_batch(np.asarray(state, dtype=np.float64)[None, :], [tuple(draws)])[0])

    def accumulate_weighted_grad(self, states: np.ndarray, draws_list, weights: np.ndarray) -> None:
        probs, (cache, h, act) = self._probs(states)
        x = self._vectors(draws_list)
        dlogits = np.asarray(weights)[:, None] * (x - probs)
        dact = self.head.backward(act, dlogits)
        dh = dact * (h > 0.0)
        self.encoder.backward(cache, dh)

    def act(self, state: np.ndarray, rng: np.random.Generator) -> ActionSample:
        probs, _ = self._probs(np.asarray(state, dtype=np.float64)[None, :])
        draws = tuple(int(i) for i in np.nonzero(probs[0] > 0.5)[0])
        return self._finish(state, draws)

    def greedy(self, state: np.ndarray) -> ActionSample:
        return self.act(state, rng=None)

    def _finish(self, state, draws) -> ActionSample:
        executed = tuple(sorted({self.vocabulary.act_at(i) for i in draws}))
        return ActionSample(
            k=len(draws),
            draws=draws,
            log_prob=self.log_prob(state, draws),
            executed=executed,
        )


class ValueNet:
    """One-hidden-layer state-value regressor."""

    def __init__(self, state_dim: int, hidden: int = 50, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7A1)))
        self.net = MLP([state_dim, hidden, 1], rng)

    def parameters(self):
        return self.net.parameters()

    def zero_grad(self) -> None:
        self.net.zero_grad()

    def clone(self) -> "ValueNet":
        return copy.deepcopy(self)

    def forward(self, states: np.ndarray):
        out, cache = self.net.forward(states)
        return out[:, 0], cache

    def value(self, state: np.ndarray) -> float:
        return float(self.forward(np.asarray(state, dtype=np.float64)[None, :])[0][0])


@dataclass
class PpoConfig:
    clip_eps: float = 0.2
    gamma: float = 0.9
    gae_lambda: float = 0.95
    lr: float = 1e-4
    value_lr: float = 1e-3
    epochs: int = 4
    minibatch: int = 64


def compute_gae(trajectory: list[Transition], gamma: float, gae_lambda: float) -> None:
    """Fill advantage and return fields in place (deterministic from stored
    rewards and collection-time values)."""
    adv = 0.0
    next_value = 0.0
    for tr in reversed(trajectory):
        mask = 0.0 if tr.done else 1.0
        delta = tr.reward + gamma * next_value * mask - tr.value
        adv = delta + gamma * gae_lambda * mask * adv
        tr.advantage = adv
        tr.ret = adv + tr.value
        next_value = tr.value


def clipped_objective(ratio: np.ndarray, advantage: np.ndarray, clip_eps: float) -> np.ndarray:
    """Per-sample clipped surrogate (the quantity PPO maximizes)."""
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    return np.minimum(ratio * advantage, clipped * advantage)


def ppo_update(
    policy,
    value_net: ValueNet,
    trajectories: list[list[Transition]],
    config: PpoConfig,
    rng: np.random.Generator,
    policy_opt: RMSprop | None = None,
    value_opt: RMSprop | None = None,
) -> dict:
    """One PPO pass (several surrogate epochs) over completed trajectories.

    Stored sample log-probs are treated as pi_old.  Non-finite losses abort
    the update and restore the entry parameters.
    """
    if not trajectories or not any(trajectories):
        raise ValueError("need at least one completed trajectory")
    for trajectory in trajectories:
        compute_gae(trajectory, config.gamma, config.gae_lambda)
    flat = [tr for trajectory in trajectories for tr in trajectory]
    states = np.stack([tr.state for tr in flat])
    draws_list = [tr.sample.draws for tr in flat]
    old_logp = np.array([tr.sample.log_prob for tr in flat])
    advantages = np.array([tr.advantage for tr in flat])
    returns = np.array([tr.ret for tr in flat])
    std = advantages.std()
    if std > 1e-8:
        advantages = (advantages - advantages.mean()) / std

    if policy_opt is None:
        policy_opt = RMSprop(policy.parameters(), lr=config.lr)
    if value_opt is None:
        # the baseline must track returns of magnitude ~2*max_turns plus the
        # shaped-bonus stream; a slow value fit biases advantages
        value_opt = Adam(value_net.parameters(), lr=config.value_lr)

    snapshot = [p.copy() for p, _ in policy.parameters()] + [p.copy() for p, _ in value_net.parameters()]
    n = len(flat)
    clip_fraction = approx_kl = value_loss = 0.0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            idx = order[start : start + config.minibatch]
            mb_states = states[idx]
            mb_draws = [draws_list[i] for i in idx]
            mb_adv = advantages[idx]
            new_logp = policy.log_prob_batch(mb_states, mb_draws)
            ratio = np.exp(new_logp - old_logp[idx])
            surrogate = clipped_objective(ratio, mb_adv, config.clip_eps)

            values, cache = value_net.forward(mb_states)
            v_loss = float(np.mean((values - returns[idx]) ** 2))
            if not (np.all(np.isfinite(surrogate)) and np.isfinite(v_loss)):
                for (p, _), saved in zip(policy.parameters() + value_net.parameters(), snapshot):
                    p[...] = saved
                return {"aborted": True, "clip_fraction": float("nan"),
                        "approx_kl": float("nan"), "value_loss": float("nan")}

            # gradient of -mean(surrogate): zero where the clipped branch is
            # active and the ratio sits outside the trust band
            unclipped = ratio * mb_adv
            clipped = np.clip(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps) * mb_adv
            inside = np.abs(ratio - 1.0) <= config.clip_eps
            w = np.where(unclipped <= clipped, mb_adv * ratio, np.where(inside, mb_adv * ratio, 0.0))
            policy.zero_grad()
            policy.accumulate_weighted_grad(mb_states, mb_draws, -w / len(idx))
            policy_opt.step()

            value_net.zero_grad()
            value_net.net.backward(cache, (2.0 * (values - returns[idx]) / len(idx))[:, None])
            value_opt.step()

            if epoch == config.epochs - 1:
                clip_fraction += float(np.mean(np.abs(ratio - 1.0) > config.clip_eps)) * len(idx) / n
                approx_kl += float(np.mean(old_logp[idx] - new_logp)) * len(idx) / n
                value_loss += v_loss * len(idx) / n
    return {
        "aborted": False,
        "clip_fraction": clip_fraction,
        "approx_kl": approx_kl,
        "value_loss": value_loss,
        "mean_advantage": float(np.mean(advantages)),
        "mean_return": float(np.mean(returns)),
    }


def canonical_draws(acts, vocabulary: ActionVocabulary) -> tuple[int, ...]:
    """Demo act sets serialized in the vocabulary's total order."""
    return tuple(sorted(vocabulary.index_of(a) for a in acts))


def imitation_pretrain(
    policy,
    demos: list[tuple[np.ndarray, frozenset]],
    steps: int,
    rng: np.random.Generator,
    lr: float = 1e-5,
    minibatch: int = 64,
) -> list[float]:
    """Minimize -log_prob of demonstrated act sets; returns the loss curve."""
    if not demos:
        raise ValueError("demos must be non-empty")
    states = np.stack([s for s, _ in demos])
    draws_list = [canonical_draws(acts, policy.vocabulary) for _, acts in demos]
    for draws in draws_list:
        if not 1 <= len(draws) <= policy.k_max:
            raise ValueError(f"demo set size {len(draws)} outside [1, {policy.k_max}]")
    optimizer = Adam(policy.parameters(), lr=lr)
    losses = []
    for _ in range(steps):
        idx = rng.integers(len(demos), size=min(minibatch, len(demos)))
        mb_states = states[idx]
        mb_draws = [draws_list[i] for i in idx]
        logp = policy.log_prob_batch(mb_states, mb_draws)
        losses.append(float(-np.mean(logp)))
        policy.zero_grad()
        policy.accumulate_weighted_grad(mb_states, mb_draws, np.full(len(idx), -1.0 / len(idx)))
        optimizer.step()
    return losses
