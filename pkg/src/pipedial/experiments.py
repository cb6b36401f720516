"""Ablation experiment protocol: per seed, pretrain once, then run each
mechanism set's joint phase from the same initialization and benchmark all
variants on paired goals."""

from __future__ import annotations

import copy
import dataclasses

from .benchmark import BenchmarkReport, run_benchmark
from .config import RunConfig
from .nets import Adam, AdamW, RMSprop
from .snapshot import World
from .trainer import Trainer

ABLATION_ORDER = ("vanilla", "poiss", "poiss-aug", "poiss-aug-bonus")


def adopt_components(trainer: Trainer, source: Trainer) -> None:
    """Deep-copy another run's models into `trainer` and rebind optimizers."""
    cfg = trainer.config
    trainer.policy = copy.deepcopy(source.policy)
    trainer.value_net = copy.deepcopy(source.value_net)
    trainer.system_nlu = source.system_nlu.clone()
    trainer.user_nlu = source.user_nlu.clone()
    trainer.policy_opt = RMSprop(trainer.policy.parameters(), lr=cfg.ppo_lr)
    trainer.value_opt = Adam(trainer.value_net.parameters(), lr=cfg.value_lr)
    trainer.nlu_opt = AdamW(
        trainer.system_nlu.parameters(), lr=cfg.nlu_lr, weight_decay=cfg.nlu_weight_decay
    )


def _final_report(trainer: Trainer, bench_sessions: int, bench_seed: int) -> BenchmarkReport:
    return run_benchmark(
        trainer.world,
        trainer.config,
        trainer.policy,
        bench_sessions,
        bench_seed,
        system_nlu=trainer.system_nlu,
        user_nlu=trainer.user_nlu,
    )


def run_ablation_suite(
    world: World,
    seed: int,
    base_config: RunConfig | None = None,
    epochs: int | None = None,
    bench_sessions: int = 200,
    bench_seed: int = 4242,
    variants: tuple[str, ...] = ABLATION_ORDER,
    progress=None,
) -> dict[str, dict]:
    """One seed's worth of the ablation table.

    Returns {variant: {"report": BenchmarkReport, "history": [per-epoch
    success rates], "initial_success": float}}.
    """
    base_config = base_config or RunConfig()
    config = dataclasses.replace(base_config, seed=seed)
    epochs = config.epochs if epochs is None else epochs

    shared = Trainer(world, config.apply_ablation("poiss"))
    shared.pretrain()
    artifacts = shared.pretrain_artifacts()

    results: dict[str, dict] = {}
    for variant in variants:
        run_config = config.apply_ablation(variant)
        trainer = Trainer(world, run_config)
        if getattr(shared.policy, "k_max", None) is not None and run_config.poisson_head:
            adopt_components(trainer, shared)
        else:
            trainer.pretrain(artifacts=artifacts)
        history = []
        for epoch in range(epochs):
            metrics = trainer.joint_epoch(epoch)
            history.append(metrics["success_rate"])
            if progress:
                progress(variant, epoch, metrics)
        report = _final_report(trainer, bench_sessions, bench_seed)
        results[variant] = {
            "report": report,
            "history": history,
            "initial_success": history[0] if history else None,
            "final_success": report.success_rate,
        }
    return results
