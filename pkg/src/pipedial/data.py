"""Labeled-corpus builders: the fixed offline corpus for the system NLU, the
system-side corpus that fixes the user NLU, and held-out evaluation sets.

Corpora mix goal-driven messages (act-level sessions under the rule policy)
with uniformly sampled act sets so every vocabulary act gets coverage.
"""

from __future__ import annotations

import json

import numpy as np

from .acts import DONTCARE, VALUED_INTENTS, DialogAct
from .nlg import LabeledUtterance, LabelingError, TemplateBank, acts_to_supervision, realize
from .ontology import generate_goal
from .pipeline import DialogSystem, run_session
from .rule_policy import RuleSystemPolicy
from .snapshot import World
from .usersim import AgendaUserSimulator

SESSION_SHARE = 0.5


def _value_for(act, world, rng: np.random.Generator) -> str:
    schema = world.ontology.domain(act.domain)
    if act.slot in schema.informable:
        values = schema.informable[act.slot]
        return str(values[rng.integers(len(values))])
    pool = world.db.entities[act.domain]
    return pool[int(rng.integers(len(pool)))][act.slot]


def sample_act_list(world: World, side: str, rng: np.random.Generator, max_acts: int = 3) -> list[DialogAct]:
    vocab = world.system_vocab if side == "system" else world.user_vocab
    k = int(rng.integers(1, max_acts + 1))
    picked = [vocab.act_at(int(i)) for i in rng.integers(len(vocab), size=k)]
    acts: list[DialogAct] = []
    for delex in picked:
        if delex.intent in VALUED_INTENTS:
            # user informs occasionally carry the wildcard, as live answers
            # to off-goal system requests do
            if side == "user" and rng.random() < 0.15:
                value = DONTCARE
            else:
                value = _value_for(delex, world, rng)
            acts.append(DialogAct(delex.intent, delex.domain, delex.slot, value))
        else:
            act = DialogAct(delex.intent, delex.domain, delex.slot)
            if act not in acts:
                acts.append(act)
    return acts


def _label(acts, bank: TemplateBank, rng: np.random.Generator) -> LabeledUtterance | None:
    if not acts:
        return None
    utterance = realize(acts, bank, int(rng.integers(2**63)))
    try:
        return acts_to_supervision(acts, utterance)
    except LabelingError:
        return None


def _session_messages(world: World, rng: np.random.Generator, n_sessions: int):
    """Act-level rule-policy sessions; returns (user act lists, system act lists)."""
    user_msgs, system_msgs = [], []
    for i in range(n_sessions):
        goal_seed = int(rng.integers(2**31))
        goal = generate_goal(goal_seed, world.ontology, world.db, int(rng.integers(1, 4)))
        system = DialogSystem(world.ontology, world.db, world.vectorizer, RuleSystemPolicy(world.ontology))
        sim = AgendaUserSimulator(goal, world.ontology, world.db, rng)
        result = run_session(system, sim, rng, act_level=True)
        for record in result.trace:
            if record.user_acts:
                user_msgs.append(list(record.user_acts))
            if record.system_acts:
                system_msgs.append(list(record.system_acts))
        if result.closing_user_acts:
            user_msgs.append(list(result.closing_user_acts))
    return user_msgs, system_msgs


def build_corpus(world: World, side: str, bank: TemplateBank, size: int, seed: int,
                 max_acts: int = 3) -> list[LabeledUtterance]:
    """`size` labeled utterances for one side, realized with `bank`.

    `max_acts` caps the acts per message (longer session messages are
    skipped); corpora built with a low cap leave the resulting NLU weak on
    crowded turns.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0CB)))
    n_sessions = max(4, size // 6)
    user_msgs, system_msgs = _session_messages(world, rng, n_sessions)
    pool = user_msgs if side == "user" else system_msgs
    out: list[LabeledUtterance] = []
    target_session = int(size * SESSION_SHARE)
    for acts in pool:
        if len(out) >= target_session:
            break
        if len(acts) > max_acts:
            continue
        labeled = _label(acts, bank, rng)
        if labeled is not None:
            out.append(labeled)
    while len(out) < size:
        labeled = _label(sample_act_list(world, side, rng, max_acts=max_acts), bank, rng)
        if labeled is not None:
            out.append(labeled)
    return out


def save_corpus(path, corpus) -> None:
    with open(path, "w") as fh:
        json.dump([ex.to_json() for ex in corpus], fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_corpus(path) -> list[LabeledUtterance]:
    with open(path) as fh:
        return [LabeledUtterance.from_json(obj) for obj in json.load(fh)]
