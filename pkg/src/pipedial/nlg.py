"""Template NLG for both sides, plus the rule-based inversion that turns
dialog acts into token-level NLU supervision (the data-augmentation engine).

Values are substituted verbatim into templates (placeholder ``#VALUE#``), so
the labeler can always locate value spans; banks are plain JSON on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .acts import (
    BYE,
    GREET,
    INFORM,
    REQMORE,
    VALUED_INTENTS,
    ActionVocabulary,
    DelexAct,
    DialogAct,
    delexicalize,
)
from .ontology import NAME_SLOT, Ontology

PLACEHOLDER = "#VALUE#"


class LabelingError(RuntimeError):
    """An act's value could not be located in the utterance."""


@dataclass(frozen=True)
class TemplateBank:
    side: str
    templates: dict[DelexAct, tuple[str, ...]]

    def for_act(self, act: DelexAct) -> tuple[str, ...]:
        try:
            return self.templates[act]
        except KeyError:
            raise LabelingError(f"no templates for {act.render()} in {self.side} bank") from None

    def validate(self, vocabulary: ActionVocabulary) -> None:
        for act in vocabulary:
            templates = self.templates.get(act, ())
            if len(templates) < 2:
                raise ValueError(f"{act.render()} has {len(templates)} templates, need >= 2")
            expected = 1 if act.intent in VALUED_INTENTS else 0
            for template in templates:
                if template.count(PLACEHOLDER) != expected:
                    raise ValueError(f"bad placeholder count in {template!r} for {act.render()}")

    def all_tokens(self) -> set[str]:
        tokens: set[str] = set()
        for templates in self.templates.values():
            for template in templates:
                tokens.update(t for t in template.split() if t != PLACEHOLDER)
        return tokens

    def to_json(self) -> dict:
        return {
            "side": self.side,
            "templates": {act.render(): list(ts) for act, ts in sorted(self.templates.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TemplateBank":
        templates = {}
        for key, ts in obj["templates"].items():
            intent, domain, slot = key.split("-")
            slot = "" if slot.lower() == "none" else slot.lower()
            templates[DelexAct(intent.lower(), domain.lower(), slot)] = tuple(ts)
        return cls(side=obj["side"], templates=templates)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TemplateBank":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class LabeledUtterance:
    """Tokens with BIO slot tags and sentence-level intent labels."""

    tokens: tuple[str, ...]
    acts: tuple[DialogAct, ...]
    slot_tags: tuple[str, ...]
    intents: frozenset[tuple[str, str, str]]

    def __post_init__(self):
        if len(self.slot_tags) != len(self.tokens):
            raise ValueError("slot_tags length must equal tokens length")

    def to_json(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "acts": [a.render() for a in self.acts],
            "slot_tags": list(self.slot_tags),
            "intents": sorted("-".join(i) for i in self.intents),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledUtterance":
        intents = set()
        for text in obj["intents"]:
            intent, domain, slot = text.split("-")
            intents.add((intent, domain, slot))
        return cls(
            tokens=tuple(obj["tokens"]),
            acts=tuple(DialogAct.parse(a) for a in obj["acts"]),
            slot_tags=tuple(obj["slot_tags"]),
            intents=frozenset(intents),
        )


def realize(acts, bank: TemplateBank, rng_seed: int) -> list[str]:
    """One uniformly sampled template per act, concatenated in act order."""
    rng = np.random.default_rng(np.random.SeedSequence((rng_seed, 0x7E71)))
    tokens: list[str] = []
    for act in acts:
        templates = bank.for_act(delexicalize(act))
        template = templates[int(rng.integers(len(templates)))]
        for token in template.split():
            if token == PLACEHOLDER:
                tokens.extend(act.value.split())
            else:
                tokens.append(token)
    return tokens


def _find_span(tokens, value_tokens, claimed) -> int | None:
    n, m = len(tokens), len(value_tokens)
    for start in range(n - m + 1):
        if any(claimed[start : start + m]):
            continue
        if list(tokens[start : start + m]) == value_tokens:
            return start
    return None


def acts_to_supervision(acts, utterance) -> LabeledUtterance:
    """Convert (acts, realized utterance) into BIO tags + intent labels.

    Valued acts claim the earliest unclaimed occurrence of their value span,
    scanning in act order; valueless acts become sentence-level intents.
    Raises LabelingError when a value cannot be found verbatim.
    """
    tokens = tuple(utterance)
    tags = ["O"] * len(tokens)
    claimed = [False] * len(tokens)
    intents: set[tuple[str, str, str]] = set()
    for act in acts:
        if act.value:
            value_tokens = act.value.split()
            start = _find_span(tokens, value_tokens, claimed)
            if start is None:
                raise LabelingError(f"value {act.value!r} not found for {act.render()}")
            label = f"{act.intent}-{act.domain}-{act.slot}"
            tags[start] = f"b-{label}"
            for offset in range(1, len(value_tokens)):
                tags[start + offset] = f"i-{label}"
            for offset in range(len(value_tokens)):
                claimed[start + offset] = True
        else:
            intents.add((act.intent, act.domain, act.slot))
    return LabeledUtterance(
        tokens=tokens,
        acts=tuple(acts),
        slot_tags=tuple(tags),
        intents=frozenset(intents),
    )


_SLOT_PHRASES = {
    "pricerange": "price range",
    "stars": "star rating",
    "fee": "entrance fee",
    "postcode": "post code",
    "phone": "phone number",
    "dining": "dining style",
}

_SYSTEM_FRAMES = {
    "inform": (
        "the {slotp} of the {dom} is #VALUE# .",
        "it has a {slotp} of #VALUE# .",
        "for {slotp} , expect #VALUE# .",
    ),
    "inform_name": (
        "#VALUE# would be a good fit .",
        "you could try #VALUE# .",
        "i suggest #VALUE# for you .",
    ),
    "request": (
        "which {slotp} would you prefer for the {dom} ?",
        "do you have a {slotp} preference ?",
        "what {slotp} should the {dom} have ?",
    ),
    "recommend": (
        "i would recommend #VALUE# .",
        "how about #VALUE# ?",
        "#VALUE# is a popular choice .",
    ),
    "select": (
        "you could go with a {slotp} of #VALUE# .",
        "one option has {slotp} #VALUE# .",
    ),
    "nooffer": (
        "sorry , i could not find a matching {dom} .",
        "i am afraid nothing fits those requirements .",
    ),
    "greet": (
        "hello , how can i help you ?",
        "good day , what can i do for you ?",
    ),
    "bye": (
        "goodbye , have a lovely day .",
        "thanks for stopping by , bye .",
    ),
    "reqmore": (
        "is there anything else i can help with ?",
        "can i do anything else for you ?",
    ),
}

# user frames 0-1 form the offline bank; the live simulator draws from all
# five, which creates the distribution gap the augmentation closes
_USER_FRAMES = {
    "inform": (
        "i need a {dom} with a {slotp} of #VALUE# .",
        "i am looking for a {dom} whose {slotp} is #VALUE# .",
        "please find me a {dom} where the {slotp} is #VALUE# .",
        "for this {dom} , the {slotp} ought to be #VALUE# .",
        "a {dom} would suit me if its {slotp} was #VALUE# .",
    ),
    "request": (
        "what is the {slotp} of the {dom} ?",
        "can you tell me the {dom} 's {slotp} ?",
        "i also want to know the {slotp} of that {dom} .",
        "could you share the {slotp} for this {dom} please ?",
        "let me know the {dom} 's {slotp} .",
    ),
    "greet": (
        "hello !",
        "hi there .",
        "good morning .",
        "hey , i could use some help .",
        "greetings .",
    ),
    "bye": (
        "thank you , goodbye .",
        "that is all , bye .",
        "great , thanks a lot . bye .",
        "perfect , i am done . goodbye .",
        "cheers , see you .",
    ),
}

OFFLINE_TEMPLATES_PER_ACT = 2


def _phrase(slot: str) -> str:
    return _SLOT_PHRASES.get(slot, slot)


def _frames_for(act: DelexAct, side: str) -> tuple[str, ...]:
    frames = _SYSTEM_FRAMES if side == "system" else _USER_FRAMES
    if act.intent == INFORM and act.slot == NAME_SLOT and side == "system":
        return frames["inform_name"]
    if act.intent in (GREET, BYE, REQMORE):
        return frames[act.intent]
    return frames[act.intent]


def build_bank(ontology: Ontology, side: str, max_templates: int | None = None) -> TemplateBank:
    vocabulary = ActionVocabulary.build(ontology, side)
    templates: dict[DelexAct, tuple[str, ...]] = {}
    for act in vocabulary:
        frames = _frames_for(act, side)
        rendered = tuple(
            frame.format(dom=act.domain, slotp=_phrase(act.slot)) for frame in frames
        )
        if max_templates is not None:
            rendered = rendered[:max_templates]
        templates[act] = rendered
    bank = TemplateBank(side=side, templates=templates)
    bank.validate(vocabulary)
    return bank


@dataclass(frozen=True)
class Banks:
    system: TemplateBank
    user: TemplateBank
    offline: TemplateBank


def build_default_banks(ontology: Ontology) -> Banks:
    """System bank, full user bank, and the reduced offline-corpus bank."""
    return Banks(
        system=build_bank(ontology, "system"),
        user=build_bank(ontology, "user"),
        offline=build_bank(ontology, "user", max_templates=OFFLINE_TEMPLATES_PER_ACT),
    )
