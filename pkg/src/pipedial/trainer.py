"""Joint system-wise optimization loop: reward assembly, buffer management,
batch collection, the PPO pass, and per-epoch NLU fine-tuning, with the
ablation switches (count head / augmentation / bonus) wired through.

Seeding discipline: one master seed derives every per-session seed through
(seed, phase, epoch, index) tuples, so runs replay byte-identically.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .acts import act_f1
from .config import RunConfig
from .data import build_corpus
from .nets import Adam, AdamW, RMSprop
from .nlg import LabeledUtterance, LabelingError, acts_to_supervision
from .nlu import NluModel, train_nlu
from .ontology import generate_goal
from .pipeline import DialogSystem, SessionResult, run_session
from .policy import PpoConfig, Transition, ValueNet, imitation_pretrain, ppo_update
from .rule_policy import RuleSystemPolicy
from .snapshot import Snapshot, World, world_fingerprint
from .usersim import AgendaUserSimulator

PHASE_PRETRAIN = 1
PHASE_COLLECT = 2
PHASE_UPDATE = 3
PHASE_EVAL = 4


def original_reward(success: bool | None, turns: int) -> float:
    """Sparse task reward: 0 while running, +2L on success, -L on failure."""
    if success is None:
        return 0.0
    return 2.0 * turns if success else -float(turns)


def bonus_reward(system_acts, recovered_acts) -> float:
    """F1 between what the system said and what the fixed user NLU understood."""
    return act_f1(recovered_acts, system_acts)[2]


@dataclass
class PretrainArtifacts:
    """Head-independent pretraining products, reusable across ablation runs
    that share a seed (each run gets deep copies)."""

    system_nlu: NluModel
    user_nlu: NluModel


@dataclass
class Buffers:
    """On-policy trajectory buffer D, augmented NLU pairs M, offline corpus B."""

    offline: list[LabeledUtterance]
    trajectories: list[list[Transition]] = field(default_factory=list)
    augmented: list[LabeledUtterance] = field(default_factory=list)
    labeling_failures: int = 0

    def clear_epoch(self) -> None:
        self.trajectories = []
        self.augmented = []
        self.labeling_failures = 0


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(tuple(int(k) for k in key)))


@dataclass
class EpochStats:
    sessions: int = 0
    successes: int = 0
    turns: int = 0
    bonus_sum: float = 0.0
    bonus_count: int = 0
    reward_sum: float = 0.0

    @property
    def success_rate(self) -> float:
        return self.successes / self.sessions if self.sessions else 0.0

    @property
    def mean_turns(self) -> float:
        return self.turns / self.sessions if self.sessions else 0.0

    @property
    def mean_bonus(self) -> float:
        return self.bonus_sum / self.bonus_count if self.bonus_count else 0.0


class Trainer:
    """Owns the models, buffers and optimizers for one training run."""

    def __init__(self, world: World, config: RunConfig, log_path: str | None = None,
                 offline_corpus: list[LabeledUtterance] | None = None):
        self.world = world
        self.config = config
        self.log_path = log_path
        self.last_sessions: list[SessionResult] = []
        self.system_nlu = world.new_nlu(config.nlu_emb_dim, seed=config.seed)
        self.user_nlu = world.new_nlu(config.nlu_emb_dim, seed=config.seed + 1)
        self.policy = world.new_policy(
            config.poisson_head, hidden=config.policy_hidden, k_max=config.k_max, seed=config.seed
        )
        self.value_net = ValueNet(world.vectorizer.m, hidden=config.value_hidden, seed=config.seed)
        self.ppo_config = PpoConfig(
            clip_eps=config.ppo_clip,
            gamma=config.gamma,
            gae_lambda=config.gae_lambda,
            lr=config.ppo_lr,
            value_lr=config.value_lr,
            epochs=config.ppo_epochs,
            minibatch=config.ppo_minibatch,
        )
        self.policy_opt = RMSprop(self.policy.parameters(), lr=config.ppo_lr)
        self.value_opt = Adam(self.value_net.parameters(), lr=config.value_lr)
        self.nlu_opt = AdamW(
            self.system_nlu.parameters(), lr=config.nlu_lr, weight_decay=config.nlu_weight_decay
        )
        if offline_corpus is None:
            offline_corpus = build_corpus(
                world, "user", world.banks.offline, config.offline_corpus_size, config.world_seed
            )
        self.buffers = Buffers(offline=offline_corpus)
        self.epoch = 0

    # -- session plumbing -----------------------------------------------------
    def _make_system(self, act_level: bool, decode: str = "sample") -> DialogSystem:
        return DialogSystem(
            self.world.ontology,
            self.world.db,
            self.world.vectorizer,
            self.policy,
            nlu=None if act_level else self.system_nlu,
            system_bank=None if act_level else self.world.banks.system,
            decode=decode,
        )

    def _make_sim(self, goal, rng, act_level: bool) -> AgendaUserSimulator:
        return AgendaUserSimulator(
            goal,
            self.world.ontology,
            self.world.db,
            rng,
            user_nlu=None if act_level else self.user_nlu,
            user_bank=None if act_level else self.world.banks.user,
            max_initiative=self.config.max_initiative,
            patience=self.config.user_patience,
        )

    def _session(self, system: DialogSystem, seed_key, act_level: bool) -> SessionResult:
        goal_rng = _rng(*seed_key, 0)
        goal = generate_goal(
            int(goal_rng.integers(2**31)),
            self.world.ontology,
            self.world.db,
            int(goal_rng.integers(1, 4)),
        )
        sim = self._make_sim(goal, _rng(*seed_key, 1), act_level)
        return run_session(
            system, sim, _rng(*seed_key, 2), act_level=act_level, max_turns=self.config.max_turns
        )

    # -- Algorithm phases -------------------------------------------------------
    def collect_batch(self, epoch: int, act_level: bool = False, batch_size: int | None = None,
                      alpha: float | None = None) -> EpochStats:
        """Fill D (and M when augmentation is on) with at least batch_size steps."""
        batch_size = batch_size or self.config.batch_size
        alpha = self.config.effective_alpha if alpha is None else alpha
        self.buffers.clear_epoch()
        self.last_sessions = []
        stats = EpochStats()
        system = self._make_system(act_level)
        session_idx = 0
        collected = 0
        while collected < batch_size:
            result = self._session(
                system, (self.config.seed, PHASE_COLLECT, epoch, session_idx), act_level
            )
            session_idx += 1
            trajectory = []
            L = result.judged.turns
            for record, turn in result.turns:
                bonus = bonus_reward(record.system_acts, record.recovered_acts)
                record.reward_bonus = bonus
                terminal = record.turn == L
                reward = alpha * bonus + (
                    original_reward(result.judged.success, L) if terminal else 0.0
                )
                record.reward = reward
                trajectory.append(
                    Transition(
                        state=turn.state_vec,
                        sample=turn.sample,
                        reward=reward,
                        done=terminal,
                        value=self.value_net.value(turn.state_vec),
                    )
                )
                stats.bonus_sum += bonus
                stats.bonus_count += 1
                stats.reward_sum += reward
            self.buffers.trajectories.append(trajectory)
            self.last_sessions.append(result)
            collected += len(trajectory)
            stats.sessions += 1
            stats.successes += int(result.judged.success)
            stats.turns += L
            if self.config.augmentation and not act_level:
                self._augment(result)
        return stats

    def _augment(self, result: SessionResult) -> None:
        messages = [(r.user_acts, r.user_utterance) for r in result.trace]
        if result.closing_user_acts:
            messages.append((result.closing_user_acts, None))
        for acts, utterance in messages:
            if not acts or utterance is None:
                continue
            try:
                self.buffers.augmented.append(acts_to_supervision(acts, utterance))
            except LabelingError:
                self.buffers.labeling_failures += 1

    def joint_epoch(self, epoch: int | None = None) -> dict:
        """Collect, PPO-update the policy, then fine-tune the NLU on M and B."""
        epoch = self.epoch if epoch is None else epoch
        stats = self.collect_batch(epoch)
        diag = ppo_update(
            self.policy,
            self.value_net,
            self.buffers.trajectories,
            self.ppo_config,
            _rng(self.config.seed, PHASE_UPDATE, epoch),
            policy_opt=self.policy_opt,
            value_opt=self.value_opt,
        )
        nlu_loss = None
        if self.config.augmentation and self.buffers.augmented:
            nlu_loss, _ = train_nlu(
                self.system_nlu,
                self.buffers.offline,
                self.buffers.augmented,
                self.config.nlu_steps_per_epoch,
                _rng(self.config.seed, PHASE_UPDATE, epoch, 1),
                batch_augmented=self.config.nlu_batch_augmented,
                batch_offline=self.config.nlu_batch_offline,
                optimizer=self.nlu_opt,
            )
        metrics = {
            "epoch": epoch,
            "sessions": stats.sessions,
            "success_rate": stats.success_rate,
            "mean_turns": stats.mean_turns,
            "mean_bonus": stats.mean_bonus,
            "mean_reward": stats.reward_sum / max(stats.bonus_count, 1),
            "transitions": sum(len(t) for t in self.buffers.trajectories),
            "augmented_pairs": len(self.buffers.augmented),
            "labeling_failures": self.buffers.labeling_failures,
            "nlu_loss": nlu_loss,
            "lambda_mean": self._mean_lambda(),
            **{f"ppo_{k}": v for k, v in diag.items()},
        }
        self._log(metrics)
        self.epoch = epoch + 1
        return metrics

    def _mean_lambda(self) -> float | None:
        if not hasattr(self.policy, "lambda_of"):
            return None
        states = [tr.state for traj in self.buffers.trajectories[:8] for tr in traj]
        if not states:
            return None
        lams = [self.policy.lambda_of(s) for s in states[:64]]
        return float(np.mean(lams))

    # -- pretraining --------------------------------------------------------------
    def pretrain(self, artifacts: PretrainArtifacts | None = None) -> dict:
        """System/user NLU supervised pretraining, imitation for the policy,
        then act-level PPO under the perfect-channel assumption.

        Passing `artifacts` (from a sibling run with the same seed) skips the
        head-independent NLU stage and deep-copies the models instead.
        """
        cfg = self.config
        info: dict = {}
        if artifacts is not None:
            self.system_nlu = artifacts.system_nlu.clone()
            self.user_nlu = artifacts.user_nlu.clone()
            self.nlu_opt = AdamW(
                self.system_nlu.parameters(), lr=cfg.nlu_lr, weight_decay=cfg.nlu_weight_decay
            )
            info["reused_nlu"] = True
        else:
            _, f1 = train_nlu(
                self.system_nlu,
                self.buffers.offline,
                [],
                cfg.nlu_pretrain_steps,
                _rng(cfg.seed, PHASE_PRETRAIN, 0),
                lr=cfg.nlu_lr,
                weight_decay=cfg.nlu_weight_decay,
                holdout=self.buffers.offline[:64],
            )
            info["system_nlu_f1_offline"] = f1
            # the fixed user NLU trains on turns of at most user_nlu_max_acts
            # acts, so crowded system turns are genuinely harder to understand
            user_corpus = build_corpus(
                self.world, "system", self.world.banks.system, cfg.user_nlu_corpus_size,
                cfg.world_seed + 1, max_acts=cfg.user_nlu_max_acts,
            )
            _, f1 = train_nlu(
                self.user_nlu,
                user_corpus,
                [],
                cfg.user_nlu_pretrain_steps,
                _rng(cfg.seed, PHASE_PRETRAIN, 1),
                lr=cfg.nlu_lr,
                weight_decay=cfg.nlu_weight_decay,
                holdout=user_corpus[:64],
            )
            info["user_nlu_f1"] = f1

        demos = self.gather_demos(cfg.imitation_dialogs)
        losses = imitation_pretrain(
            self.policy,
            demos,
            cfg.imitation_steps,
            _rng(cfg.seed, PHASE_PRETRAIN, 2),
            lr=cfg.imitation_lr,
        )
        info["imitation_first_loss"] = losses[0] if losses else None
        info["imitation_last_loss"] = losses[-1] if losses else None

        for ppo_epoch in range(cfg.pretrain_ppo_epochs):
            stats = self.collect_batch(
                epoch=10_000 + ppo_epoch, act_level=True,
                batch_size=cfg.pretrain_batch_size, alpha=0.0,
            )
            ppo_update(
                self.policy,
                self.value_net,
                self.buffers.trajectories,
                self.ppo_config,
                _rng(cfg.seed, PHASE_PRETRAIN, 3, ppo_epoch),
                policy_opt=self.policy_opt,
                value_opt=self.value_opt,
            )
            info["pretrain_ppo_success"] = stats.success_rate
        self.buffers.clear_epoch()
        self._log({"pretrain": info})
        return info

    def pretrain_artifacts(self) -> PretrainArtifacts:
        return PretrainArtifacts(system_nlu=self.system_nlu, user_nlu=self.user_nlu)

    def gather_demos(self, n_dialogs: int) -> list[tuple[np.ndarray, frozenset]]:
        """(state, act-set) pairs from the rule policy at the dialog-act level."""
        system = DialogSystem(
            self.world.ontology, self.world.db, self.world.vectorizer, RuleSystemPolicy(self.world.ontology)
        )
        demos = []
        for i in range(n_dialogs):
            result = self._session(system, (self.config.seed, PHASE_PRETRAIN, 100, i), act_level=True)
            for _, turn in result.turns:
                acts = frozenset(a for a in turn.delex_acts if a in self.world.system_vocab)
                if acts and len(acts) <= self.config.k_max:
                    demos.append((turn.state_vec, acts))
        return demos

    def _log(self, payload: dict) -> None:
        if self.log_path:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(payload, sort_keys=True) + "\n")

    # -- snapshots -------------------------------------------------------------------
    def snapshot(self, extra_meta: dict | None = None) -> Snapshot:
        meta = {
            "fingerprint": world_fingerprint(self.config, self.world),
            "epoch": self.epoch,
        }
        if extra_meta:
            meta.update(extra_meta)
        return Snapshot(
            world=self.world,
            config=self.config,
            policy=self.policy,
            value_net=self.value_net,
            system_nlu=self.system_nlu,
            user_nlu=self.user_nlu,
            meta=meta,
        )


def train_run(world: World, config: RunConfig, out_dir: str | None = None,
              epochs: int | None = None, save_every: int = 0,
              offline_corpus: list[LabeledUtterance] | None = None) -> Trainer:
    """Pretrain then run the configured number of joint epochs."""
    log_path = os.path.join(out_dir, "metrics.jsonl") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        if log_path and os.path.exists(log_path):
            os.remove(log_path)
    trainer = Trainer(world, config, log_path=log_path, offline_corpus=offline_corpus)
    if not config.skip_pretrain:
        trainer.pretrain()
    n_epochs = config.epochs if epochs is None else epochs
    for epoch in range(n_epochs):
        trainer.joint_epoch(epoch)
        if out_dir and save_every and (epoch + 1) % save_every == 0:
            trainer.snapshot().save(os.path.join(out_dir, f"epoch_{epoch + 1:03d}"))
    if out_dir:
        trainer.snapshot().save(os.path.join(out_dir, "final"))
    return trainer
