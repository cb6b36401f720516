"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The system-wise ordering experiment (4 ablation variants x 5 seeds, 30 joint
epochs each) is the expensive fixture; it is shared by the ordering and
domain-scaling criteria and parallelized over available cores.
"""

import concurrent.futures
import itertools
import json
import math
import os
import statistics
import time

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import relative_error
from pipedial.acts import DialogAct
from pipedial.benchmark import run_benchmark
from pipedial.cli import main as cli_main
from pipedial.config import RunConfig
from pipedial.data import build_corpus, sample_act_list
from pipedial.experiments import ABLATION_ORDER, run_ablation_suite
from pipedial.nlg import acts_to_supervision, realize
from pipedial.nlu import NluBatch, evaluate_f1, train_nlu
from pipedial.policy import (
    PoissonSetPolicy,
    PpoConfig,
    Transition,
    ValueNet,
    ppo_update,
)
from pipedial.rule_policy import RuleSystemPolicy
from pipedial.snapshot import World
from pipedial.trainer import Trainer, bonus_reward, original_reward
from pipedial.usersim import TurnRecord, judge
from pipedial.ontology import DomainGoal, UserGoal

SEEDS = (0, 1, 2, 3, 4)


def report(name: str, passed: bool, detail: str = "") -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if passed else 'FAIL'}" + (f"  [{detail}]" if detail else ""))
    assert passed, f"{name}: {detail}"


# -- tiny worlds for the likelihood criteria ---------------------------------

def _small_policy(n_acts: int, k_max: int, seed: int = 0) -> PoissonSetPolicy:
    from pipedial.acts import ActionVocabulary, DelexAct

    vocab = ActionVocabulary(tuple(DelexAct("inform", "hotel", f"s{i}") for i in range(n_acts)))
    return PoissonSetPolicy(6, vocab, hidden=(8, 8), k_max=k_max, seed=seed)


def _oracle_trunc_logpmf(k: int, lam: float, k_max: int) -> float:
    raw = lambda j: lam**j * math.exp(-lam) / math.factorial(j)  # noqa: E731
    return math.log(raw(k) / sum(raw(j) for j in range(1, k_max + 1)))


def test_likelihood_correctness():
    start = time.time()
    rng = np.random.default_rng(0)
    worst_norm = 0.0
    worst_oracle = 0.0
    for n_acts, k_max in ((2, 2), (3, 3), (4, 3)):
        policy = _small_policy(n_acts, k_max, seed=n_acts)
        s = rng.normal(size=6)
        lam = policy.lambda_of(s)
        total = 0.0
        for k in range(1, k_max + 1):
            for seq in itertools.product(range(n_acts), repeat=k):
                logp = policy.log_prob(s, list(seq))
                total += math.exp(logp)
                _, _, act_probs = policy.act_distributions(s)
                oracle = _oracle_trunc_logpmf(k, lam, k_max) + sum(
                    math.log(act_probs[i]) for i in seq
                )
                worst_oracle = max(worst_oracle, abs(logp - oracle))
        worst_norm = max(worst_norm, abs(total - 1.0))
    elapsed = time.time() - start
    report(
        "likelihood-correctness",
        worst_norm < 1e-6 and worst_oracle < 1e-9 and elapsed < 1.0,
        f"norm err {worst_norm:.2e}, oracle err {worst_oracle:.2e}, {elapsed:.2f}s",
    )


def test_gradient_checks(world):
    start = time.time()
    step = 1e-5
    worst = 0.0

    def fd_probe(params_grads, objective, probes, probe_rng):
        nonlocal worst
        for p, g in params_grads:
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
                worst = max(worst, float(relative_error(fd, flat_g[i])))

    # ten random parameter points for the policy log-prob gradient
    rng = np.random.default_rng(7)
    for point in range(10):
        policy = _small_policy(5, 4, seed=50 + point)
        states = rng.normal(size=(3, 6))
        draws = [tuple(rng.integers(5, size=int(rng.integers(1, 5))).tolist()) for _ in range(3)]
        weights = rng.normal(size=3)
        policy.zero_grad()
        policy.accumulate_weighted_grad(states, draws, weights)
        analytic = [(p, g.copy()) for p, g in policy.parameters()]
        fd_probe(
            analytic,
            lambda: float(np.dot(weights, policy.log_prob_batch(states, draws))),
            probes=4,
            probe_rng=np.random.default_rng(point),
        )

    # NLU loss gradient at ten random points
    for point in range(10):
        model = world.new_nlu(seed=70 + point)
        data_rng = np.random.default_rng(point)
        examples = []
        for _ in range(2):
            acts = sample_act_list(world, "user", data_rng, max_acts=2)
            utterance = realize(acts, world.banks.user, int(data_rng.integers(2**62)))
            examples.append(acts_to_supervision(acts, utterance))
        batch = NluBatch(examples)
        model.zero_grad()
        model.loss_and_grads(batch)
        analytic = [(p, g.copy()) for p, g in model.parameters()]

        def nlu_loss():
            model.zero_grad()
            return model.loss_and_grads(batch)

        fd_probe(analytic, nlu_loss, probes=3, probe_rng=np.random.default_rng(100 + point))

    # value-net gradient at ten random points
    for point in range(10):
        value_net = ValueNet(6, hidden=7, seed=90 + point)
        states = rng.normal(size=(4, 6))
        targets = rng.normal(size=4)
        value_net.zero_grad()
        out, cache = value_net.forward(states)
        value_net.net.backward(cache, (2.0 * (out - targets) / len(targets))[:, None])
        analytic = [(p, g.copy()) for p, g in value_net.parameters()]

        def value_loss():
            values, _ = value_net.forward(states)
            return float(np.mean((values - targets) ** 2))

        fd_probe(analytic, value_loss, probes=4, probe_rng=np.random.default_rng(200 + point))

    elapsed = time.time() - start
    report("gradient-checks", worst < 1e-4 and elapsed < 10.0, f"worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_sampling_fidelity():
    start = time.time()
    policy = _small_policy(4, 9, seed=1)
    for p, _ in policy.parameters():
        p[...] = 0.0
    policy.lam_head.b[0] = math.log(math.exp(2.0) - 1.0)  # lambda = 2
    policy.logit_head.b[...] = np.log([0.1, 0.2, 0.3, 0.4])
    s = np.zeros(6)
    lam, count_pmf, act_probs = policy.act_distributions(s)

    rng = np.random.default_rng(4242)
    n = 100_000
    ks = rng.choice(9, p=count_pmf, size=n) + 1
    observed = np.bincount(ks, minlength=10)[1:]
    chi = chisquare(observed, n * count_pmf)

    draws = rng.choice(4, p=act_probs, size=n)
    freqs = np.bincount(draws, minlength=4) / n
    max_freq_err = float(np.max(np.abs(freqs - act_probs)))
    elapsed = time.time() - start
    report(
        "sampling-fidelity",
        chi.pvalue > 0.01 and max_freq_err < 0.01 and elapsed < 10.0,
        f"chi2 p={chi.pvalue:.3f}, categorical err {max_freq_err:.4f}, {elapsed:.1f}s",
    )


def test_ppo_bandit_convergence():
    start = time.time()
    rewarded = 2
    passes = 0
    updates_needed = []
    for seed in SEEDS:
        policy = _small_policy(4, 3, seed=seed)
        value_net = ValueNet(6, hidden=7, seed=seed)
        config = PpoConfig(lr=3e-3, epochs=4, minibatch=64)
        rng = np.random.default_rng(1000 + seed)
        s = np.zeros(6)
        done_at = None
        for update in range(200):
            trajectories = []
            for _ in range(128):
                sample = policy.act(s, rng)
                reward = 1.0 if all(d == rewarded for d in sample.draws) else -1.0
                trajectories.append(
                    [Transition(state=s, sample=sample, reward=reward, done=True, value=value_net.value(s))]
                )
            ppo_update(policy, value_net, trajectories, config, rng)
            if policy.act_distributions(s)[2][rewarded] > 0.9:
                done_at = update + 1
                break
        if done_at is not None:
            passes += 1
            updates_needed.append(done_at)
    elapsed = time.time() - start
    report(
        "ppo-bandit",
        passes == len(SEEDS) and elapsed < 60.0,
        f"{passes}/{len(SEEDS)} seeds, updates {updates_needed}, {elapsed:.1f}s",
    )


def test_reward_assembly(world):
    alpha = RunConfig().alpha  # 10 by default
    A = DialogAct("inform", "hotel", "area", "centre")
    B = DialogAct("inform", "hotel", "phone", "0123")
    turns = [
        ({A, B}, {A, B}),   # F1 = 1
        ({A, B}, {B}),      # F1 = 2/3
        ({A, B}, set()),    # F1 = 0, terminal
    ]
    L = len(turns)
    ok = True
    for success, terminal_expected in ((True, 2.0 * L), (False, -float(L))):
        rewards = []
        for t, (system_acts, recovered) in enumerate(turns, start=1):
            r = alpha * bonus_reward(system_acts, recovered)
            if t == L:
                r += original_reward(success, L)
            rewards.append(r)
        expected = [10.0, 10.0 * (2.0 / 3.0), 0.0 + terminal_expected]
        ok = ok and all(math.isclose(a, b, rel_tol=0, abs_tol=1e-12) for a, b in zip(rewards, expected))

    # the collected buffers use exactly this assembly
    config = RunConfig(batch_size=30, offline_corpus_size=30, user_nlu_corpus_size=20,
                       nlu_pretrain_steps=0, user_nlu_pretrain_steps=0, imitation_steps=0,
                       pretrain_ppo_epochs=0)
    trainer = Trainer(world, config)
    trainer.collect_batch(epoch=0)
    for result, trajectory in zip(trainer.last_sessions, trainer.buffers.trajectories):
        L = result.judged.turns
        for record, transition in zip(result.trace, trajectory):
            expected = config.alpha * bonus_reward(record.system_acts, record.recovered_acts)
            if record.turn == L:
                expected += original_reward(result.judged.success, L)
            ok = ok and math.isclose(transition.reward, expected, rel_tol=0, abs_tol=1e-12)
    report("reward-assembly", ok)


def test_metric_oracle(world):
    inform = lambda d, s, v: DialogAct("inform", d, s, v)  # noqa: E731
    hotel = world.db.query("hotel", {"area": "centre"})[0]
    wrong = next(e for e in world.db.entities["hotel"] if e["area"] != "centre")
    goal = UserGoal(parts=(DomainGoal("hotel", {"area": "centre"}, ("phone", "address")),))
    two_domain = UserGoal(
        parts=(
            DomainGoal("hotel", {"area": "centre"}, ("phone",)),
            DomainGoal("restaurant", {"food": "thai"}, ("phone",)),
        )
    )
    rest = world.db.query("restaurant", {"food": "thai"})[0]

    def turn(recovered, t=1):
        return TurnRecord(turn=t, user_acts=(), user_utterance=None, system_acts=tuple(recovered),
                          system_utterance=None, recovered_acts=tuple(recovered))

    offer = DialogAct("recommend", "hotel", "name", hotel["name"])
    wrong_offer = DialogAct("recommend", "hotel", "name", wrong["name"])
    phone = inform("hotel", "phone", hotel["phone"])
    address = inform("hotel", "address", hotel["address"])

    cases = [
        # (goal, trace, expected recall, match, success, turns)
        (goal, [turn([phone, address, offer])], 1.0, 1.0, True, 1),
        (goal, [turn([phone])], 0.5, 0.0, False, 1),
        (goal, [turn([phone, address])], 1.0, 0.0, False, 1),        # nothing offered
        (goal, [turn([phone, address, wrong_offer])], 1.0, 0.0, False, 1),
        (goal, [turn([phone, address, offer], t) for t in range(1, 22)], 1.0, 1.0, False, 21),  # cap
        (
            two_domain,
            [turn([phone, offer]), turn([inform("restaurant", "phone", rest["phone"])], 2)],
            1.0, 0.5, False, 2,
        ),
    ]
    ok = True
    for i, (g, trace, recall, match, success, turns) in enumerate(cases):
        judged = judge(g, trace, world.db)
        case_ok = (
            math.isclose(judged.inform_recall, recall)
            and math.isclose(judged.match_rate, match)
            and judged.success == success
            and judged.turns == turns
        )
        if not case_ok:
            print(f"case {i}: {judged} != ({recall}, {match}, {success}, {turns})")
        ok = ok and case_ok
    report("metric-oracle", ok)


def test_augmentation_effect(world):
    start = time.time()
    wins = 0
    gaps = []
    for seed in SEEDS:
        offline = build_corpus(world, "user", world.banks.offline, 300, 1000 + seed)
        augmented = build_corpus(world, "user", world.banks.user, 600, 2000 + seed)
        heldout = build_corpus(world, "user", world.banks.user, 200, 3000 + seed)
        base = world.new_nlu(seed=seed)
        aug = world.new_nlu(seed=seed)
        train_nlu(base, offline, [], 2500, np.random.default_rng(seed))
        train_nlu(aug, offline, augmented, 2500, np.random.default_rng(seed))
        f1_base = evaluate_f1(base, heldout)[2]
        f1_aug = evaluate_f1(aug, heldout)[2]
        gaps.append(f1_aug - f1_base)
        wins += (f1_aug - f1_base) >= 0.05
    elapsed = time.time() - start
    report(
        "augmentation-effect",
        wins >= 4 and elapsed < 600.0,
        f"wins {wins}/5, gaps {[round(g, 3) for g in gaps]}, {elapsed/60:.1f} min",
    )


# -- the big experiment: shared by ordering and domain-scaling ----------------

def _one_seed(seed: int) -> dict:
    world = World.default()
    results = run_ablation_suite(world, seed, epochs=30, bench_sessions=300, bench_seed=4242)
    return {
        variant: {
            "final": results[variant]["final_success"],
            "history": results[variant]["history"],
            "per_domain": {
                str(k): v["success"] for k, v in results[variant]["report"].per_domain.items()
            },
        }
        for variant in ABLATION_ORDER
    }


@pytest.fixture(scope="module")
def ablation_results():
    start = time.time()
    workers = min(2, os.cpu_count() or 1)
    results = {}
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        for seed, outcome in zip(SEEDS, pool.map(_one_seed, SEEDS)):
            results[seed] = outcome
            print(f"\n  seed {seed}: " + ", ".join(
                f"{v}={outcome[v]['final']:.3f}" for v in ABLATION_ORDER
            ), flush=True)
    print(f"  ablation experiment took {(time.time() - start) / 60:.1f} min", flush=True)
    return results


def test_system_wise_ordering(ablation_results):
    finals = {v: [ablation_results[s][v]["final"] for s in SEEDS] for v in ABLATION_ORDER}
    full_beats_vanilla = sum(
        ablation_results[s]["poiss-aug-bonus"]["final"] > ablation_results[s]["vanilla"]["final"]
        for s in SEEDS
    )
    medians = [statistics.median(finals[v]) for v in ABLATION_ORDER]
    monotone = all(medians[i + 1] >= medians[i] for i in range(len(medians) - 1))
    improves = [
        ablation_results[s]["poiss-aug-bonus"]["history"][-1]
        >= ablation_results[s]["poiss-aug-bonus"]["history"][0] + 0.1
        for s in SEEDS
    ]
    detail = ", ".join(f"{v} med {m:.3f}" for v, m in zip(ABLATION_ORDER, medians))
    report(
        "system-wise-ordering",
        full_beats_vanilla >= 4 and monotone and all(improves),
        f"full>vanilla {full_beats_vanilla}/5; {detail}; trend {improves}",
    )


def test_domain_scaling_shape(ablation_results):
    ok = True
    rows = []
    for seed in SEEDS:
        per_domain = ablation_results[seed]["poiss-aug-bonus"]["per_domain"]
        one, two, three = (per_domain.get(k, 0.0) for k in ("1", "2", "3"))
        rows.append((seed, round(one, 3), round(three, 3)))
        ok = ok and one >= three
        if not (one >= two >= three):
            # directional property: flagged, not hard-failed
            print(f"  note: seed {seed} non-monotone across domain counts "
                  f"(1:{one:.3f} 2:{two:.3f} 3:{three:.3f})")
    report("domain-scaling", ok, f"(seed, 1-dom, 3-dom): {rows}")


def test_oracle_ceiling(world):
    config = RunConfig()
    result = run_benchmark(world, config, RuleSystemPolicy(world.ontology), 200, 5, act_level=True)
    report("oracle-ceiling", result.success_rate >= 0.97, f"success {result.success_rate:.3f} over 200")


def test_determinism(tmp_path, world):
    config_path = tmp_path / "tiny.txt"
    RunConfig(
        epochs=2, batch_size=60, nlu_pretrain_steps=40, user_nlu_pretrain_steps=40,
        imitation_steps=40, imitation_dialogs=10, pretrain_ppo_epochs=1,
        pretrain_batch_size=40, offline_corpus_size=40, user_nlu_corpus_size=30,
        nlu_steps_per_epoch=5,
    ).save(config_path)

    def run_dir_bytes(path):
        out = {}
        for root, _, files in os.walk(path):
            for name in files:
                full = os.path.join(root, name)
                with open(full, "rb") as fh:
                    out[os.path.relpath(full, path)] = fh.read()
        return out

    dirs = []
    for tag in ("a", "b"):
        out = tmp_path / f"run_{tag}"
        code = cli_main(["train", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        dirs.append(run_dir_bytes(out))
    train_identical = dirs[0].keys() == dirs[1].keys() and all(
        dirs[0][k] == dirs[1][k] for k in dirs[0]
    )

    eval_outs = []
    for tag in ("x", "y"):
        out = tmp_path / f"eval_{tag}"
        code = cli_main([
            "eval", "--snapshot", str(tmp_path / "run_a" / "final"), "--sessions", "15",
            "--eval-seed", "9", "--out", str(out),
        ])
        assert code == 0
        eval_outs.append((out / "report.json").read_bytes())
    eval_identical = eval_outs[0] == eval_outs[1]

    bench_a = run_benchmark(world, RunConfig(), RuleSystemPolicy(world.ontology), 20, 3, act_level=True)
    bench_b = run_benchmark(world, RunConfig(), RuleSystemPolicy(world.ontology), 20, 3, act_level=True)
    bench_identical = bench_a.serialize() == bench_b.serialize()

    report(
        "determinism",
        train_identical and eval_identical and bench_identical,
        f"train {train_identical}, eval {eval_identical}, benchmark {bench_identical}",
    )
