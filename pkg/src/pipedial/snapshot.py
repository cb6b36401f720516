"""World assembly (ontology + banks + vocabularies + vectorizer) and frozen
system snapshots on disk (assets plus model checkpoints)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .acts import ActionVocabulary
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .dst import StateVectorizer
from .nlg import Banks, TemplateBank, build_default_banks
from .nlu import NluModel, build_token_vocab, label_spaces
from .ontology import EntityDatabase, Ontology, default_ontology, generate_database, load_world, save_world
from .policy import BernoulliThresholdPolicy, PoissonSetPolicy, ValueNet

WORLD_FILE = "world.json"
LAYOUT_FILE = "state_layout.txt"
TEMPLATE_FILES = {"system": "templates_system.json", "user": "templates_user.json", "offline": "templates_offline.json"}


@dataclass
class World:
    """Everything derived deterministically from (ontology, db, banks)."""

    ontology: Ontology
    db: EntityDatabase
    banks: Banks
    system_vocab: ActionVocabulary
    user_vocab: ActionVocabulary
    vectorizer: StateVectorizer
    tokens: list[str]
    tags: list[str]
    intents: list[tuple[str, str, str]]

    @classmethod
    def build(cls, ontology: Ontology, db: EntityDatabase, banks: Banks | None = None) -> "World":
        banks = banks or build_default_banks(ontology)
        system_vocab = ActionVocabulary.build(ontology, "system")
        user_vocab = ActionVocabulary.build(ontology, "user")
        tags, intents = label_spaces(ontology)
        return cls(
            ontology=ontology,
            db=db,
            banks=banks,
            system_vocab=system_vocab,
            user_vocab=user_vocab,
            vectorizer=StateVectorizer(ontology, user_vocab, system_vocab),
            tokens=build_token_vocab(banks, db),
            tags=tags,
            intents=intents,
        )

    @classmethod
    def default(cls, world_seed: int = 1234) -> "World":
        ontology = default_ontology()
        return cls.build(ontology, generate_database(ontology, world_seed))

    def new_nlu(self, emb_dim: int = 32, seed: int = 0) -> NluModel:
        return NluModel(self.tokens, self.tags, self.intents, emb_dim=emb_dim, seed=seed)

    def new_policy(self, poisson_head: bool, hidden: int = 100, k_max: int = 9, seed: int = 0):
        cls = PoissonSetPolicy if poisson_head else BernoulliThresholdPolicy
        return cls(self.vectorizer.m, self.system_vocab, hidden=(hidden, hidden), k_max=k_max, seed=seed)

    def save_assets(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        save_world(os.path.join(directory, WORLD_FILE), self.ontology, self.db)
        for side, filename in TEMPLATE_FILES.items():
            getattr(self.banks, side).save(os.path.join(directory, filename))
        with open(os.path.join(directory, LAYOUT_FILE), "w") as fh:
            fh.write(self.vectorizer.layout_doc())

    @classmethod
    def load_assets(cls, directory) -> "World":
        ontology, db = load_world(os.path.join(directory, WORLD_FILE))
        banks = Banks(
            system=TemplateBank.load(os.path.join(directory, TEMPLATE_FILES["system"])),
            user=TemplateBank.load(os.path.join(directory, TEMPLATE_FILES["user"])),
            offline=TemplateBank.load(os.path.join(directory, TEMPLATE_FILES["offline"])),
        )
        return cls.build(ontology, db, banks)


# -- model checkpoints -------------------------------------------------------

def save_nlu(model: NluModel, path) -> None:
    arrays = {
        "emb": model.emb,
        "slot_W": model.slot_head.W,
        "slot_b": model.slot_head.b,
        "intent_W": model.intent_head.W,
        "intent_b": model.intent_head.b,
    }
    meta = {
        "tokens": model.tokens,
        "tags": model.tags,
        "intents": ["-".join(i) for i in model.intents],
        "emb_dim": model.emb_dim,
    }
    save_checkpoint(path, "nlu", arrays, meta)


def load_nlu(path) -> NluModel:
    kind, arrays, meta = load_checkpoint(path)
    if kind != "nlu":
        raise ValueError(f"{path} holds a {kind!r} checkpoint, not nlu")
    intents = [tuple(text.split("-")) for text in meta["intents"]]
    model = NluModel(meta["tokens"], meta["tags"], intents, emb_dim=meta["emb_dim"])
    model.emb[...] = arrays["emb"]
    model.slot_head.W[...] = arrays["slot_W"]
    model.slot_head.b[...] = arrays["slot_b"]
    model.intent_head.W[...] = arrays["intent_W"]
    model.intent_head.b[...] = arrays["intent_b"]
    return model


def _mlp_arrays(prefix: str, mlp) -> dict:
    out = {}
    for i, layer in enumerate(mlp.layers):
        out[f"{prefix}{i}_W"] = layer.W
        out[f"{prefix}{i}_b"] = layer.b
    return out


def _restore_mlp(prefix: str, mlp, arrays: dict) -> None:
    for i, layer in enumerate(mlp.layers):
        layer.W[...] = arrays[f"{prefix}{i}_W"]
        layer.b[...] = arrays[f"{prefix}{i}_b"]


def save_policy(policy, path) -> None:
    if isinstance(policy, PoissonSetPolicy):
        arrays = _mlp_arrays("enc", policy.encoder)
        arrays.update(lam_W=policy.lam_head.W, lam_b=policy.lam_head.b,
                      logit_W=policy.logit_head.W, logit_b=policy.logit_head.b)
        head = "poisson"
    else:
        arrays = _mlp_arrays("enc", policy.encoder)
        arrays.update(head_W=policy.head.W, head_b=policy.head.b)
        head = "bernoulli"
    hidden = policy.encoder.layers[0].W.shape[1]
    meta = {"head": head, "state_dim": policy.state_dim, "hidden": hidden, "k_max": policy.k_max}
    save_checkpoint(path, "policy", arrays, meta)


def load_policy(path, vocabulary: ActionVocabulary):
    kind, arrays, meta = load_checkpoint(path)
    if kind != "policy":
        raise ValueError(f"{path} holds a {kind!r} checkpoint, not policy")
    hidden = (meta["hidden"], meta["hidden"])
    if meta["head"] == "poisson":
        policy = PoissonSetPolicy(meta["state_dim"], vocabulary, hidden=hidden, k_max=meta["k_max"])
        _restore_mlp("enc", policy.encoder, arrays)
        policy.lam_head.W[...] = arrays["lam_W"]
        policy.lam_head.b[...] = arrays["lam_b"]
        policy.logit_head.W[...] = arrays["logit_W"]
        policy.logit_head.b[...] = arrays["logit_b"]
    else:
        policy = BernoulliThresholdPolicy(meta["state_dim"], vocabulary, hidden=hidden, k_max=meta["k_max"])
        _restore_mlp("enc", policy.encoder, arrays)
        policy.head.W[...] = arrays["head_W"]
        policy.head.b[...] = arrays["head_b"]
    return policy


def save_value(value_net: ValueNet, path) -> None:
    meta = {
        "state_dim": value_net.net.layers[0].W.shape[0],
        "hidden": value_net.net.layers[0].W.shape[1],
    }
    save_checkpoint(path, "value", _mlp_arrays("v", value_net.net), meta)


def load_value(path) -> ValueNet:
    kind, arrays, meta = load_checkpoint(path)
    if kind != "value":
        raise ValueError(f"{path} holds a {kind!r} checkpoint, not value")
    value_net = ValueNet(meta["state_dim"], hidden=meta["hidden"])
    _restore_mlp("v", value_net.net, arrays)
    return value_net


@dataclass
class Snapshot:
    """A frozen, runnable system: world assets plus trained components."""

    world: World
    config: RunConfig
    policy: object
    value_net: ValueNet
    system_nlu: NluModel
    user_nlu: NluModel
    meta: dict

    @property
    def fingerprint(self) -> str:
        return self.meta["fingerprint"]

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        self.world.save_assets(directory)
        self.config.save(os.path.join(directory, "config.txt"))
        save_policy(self.policy, os.path.join(directory, "policy.ckpt"))
        save_value(self.value_net, os.path.join(directory, "value.ckpt"))
        save_nlu(self.system_nlu, os.path.join(directory, "nlu.ckpt"))
        save_nlu(self.user_nlu, os.path.join(directory, "user_nlu.ckpt"))
        with open(os.path.join(directory, "meta.json"), "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "Snapshot":
        world = World.load_assets(directory)
        config = RunConfig.load(os.path.join(directory, "config.txt"))
        with open(os.path.join(directory, "meta.json")) as fh:
            meta = json.load(fh)
        return cls(
            world=world,
            config=config,
            policy=load_policy(os.path.join(directory, "policy.ckpt"), world.system_vocab),
            value_net=load_value(os.path.join(directory, "value.ckpt")),
            system_nlu=load_nlu(os.path.join(directory, "nlu.ckpt")),
            user_nlu=load_nlu(os.path.join(directory, "user_nlu.ckpt")),
            meta=meta,
        )


def world_fingerprint(config: RunConfig, world: World) -> str:
    extra = json.dumps(world.ontology.to_json(), sort_keys=True)
    extra += json.dumps(world.banks.system.to_json(), sort_keys=True)
    extra += json.dumps(world.banks.user.to_json(), sort_keys=True)
    return config.fingerprint(extra)
