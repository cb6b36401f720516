"""Run configuration: one flat dataclass carrying every hyperparameter, with
a commented key=value file format and fingerprinting for paired comparisons."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

ABLATIONS = {
    "vanilla": dict(poisson_head=False, augmentation=False, bonus=False),
    "poiss": dict(poisson_head=True, augmentation=False, bonus=False),
    "poiss-aug": dict(poisson_head=True, augmentation=True, bonus=False),
    "poiss-aug-bonus": dict(poisson_head=True, augmentation=True, bonus=True),
}


@dataclass
class RunConfig:
    seed: int = 7
    # world + assets
    world_seed: int = 1234
    offline_corpus_size: int = 300
    user_nlu_corpus_size: int = 600
    user_nlu_max_acts: int = 2
    # policy nets
    policy_hidden: int = 100
    value_hidden: int = 50
    k_max: int = 9
    # PPO
    ppo_lr: float = 1e-4
    value_lr: float = 1e-3
    ppo_clip: float = 0.2
    gamma: float = 0.9
    gae_lambda: float = 0.95
    ppo_epochs: int = 4
    ppo_minibatch: int = 64
    batch_size: int = 2000
    # NLU
    nlu_emb_dim: int = 32
    nlu_lr: float = 3e-3
    nlu_weight_decay: float = 0.01
    nlu_batch_augmented: int = 32
    nlu_batch_offline: int = 8
    nlu_steps_per_epoch: int = 100
    nlu_pretrain_steps: int = 3000
    user_nlu_pretrain_steps: int = 5000
    # pretraining
    imitation_lr: float = 1e-5
    imitation_steps: int = 20000
    imitation_dialogs: int = 500
    pretrain_ppo_epochs: int = 4
    pretrain_batch_size: int = 1000
    skip_pretrain: bool = False
    # joint loop
    epochs: int = 30
    alpha: float = 10.0
    poisson_head: bool = True
    augmentation: bool = True
    bonus: bool = True
    # environment
    max_turns: int = 20
    max_initiative: int = 3
    user_patience: int = 3
    # evaluation
    eval_sessions: int = 1000
    eval_decode: str = "greedy"
    workers: int = 1

    def apply_ablation(self, name: str) -> "RunConfig":
        if name not in ABLATIONS:
            raise ValueError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
        return dataclasses.replace(self, **ABLATIONS[name])

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.bonus else 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self, extra: str = "") -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True) + extra
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def save(self, path) -> None:
        lines = ["# pipedial run configuration (key = value)"]
        for field in dataclasses.fields(self):
            lines.append(f"{field.name} = {getattr(self, field.name)}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        values: dict[str, object] = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, text = (part.strip() for part in line.split("=", 1))
                if key not in fields:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _parse(text, fields[key].type)
        return cls(**values)

    def describe(self) -> str:
        return "\n".join(f"{f.name} = {getattr(self, f.name)}" for f in dataclasses.fields(self))


def _parse(text: str, typename: str):
    if typename == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean {text!r}")
    if typename == "int":
        return int(text)
    if typename == "float":
        return float(text)
    return text
