"""Synthetic multi-domain world: domain schemas, entity database, user goals.

The default ontology is a desk-scale stand-in for a multi-domain booking
corpus: three domains (hotel, restaurant, attraction) with seeded entity
tables.  Everything here is immutable after construction and fully
deterministic given a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

NAME_SLOT = "name"

# Wordlists for entity generation.  Kept disjoint from slot values and from
# template wording so that BIO span search never collides with static text.
_NAME_ADJECTIVES = (
    "amber", "copper", "silver", "golden", "quiet", "royal", "crimson",
    "velvet", "ivory", "maple", "cedar", "willow", "harbor", "meadow",
    "summit", "lunar", "coral", "ember", "frost", "tidal",
)
_NAME_NOUNS = (
    "lion", "falcon", "anchor", "beacon", "orchard", "lantern", "compass",
    "gable", "turret", "arbor", "quill", "sparrow", "heron", "bramble",
    "paddock", "mill", "forge", "wharf", "spire", "glade",
)
_STREETS = (
    "bridge road", "station lane", "market row", "garden walk", "abbey way",
    "castle drive", "chapel street", "orchard close", "river path", "tower hill",
)


class GoalGenerationError(RuntimeError):
    """Raised when no achievable goal can be built after bounded retries."""


@dataclass(frozen=True)
class DomainSchema:
    """One domain: informable slots with finite value sets, requestable slots."""

    name: str
    informable: dict[str, tuple[str, ...]]
    requestable: tuple[str, ...]

    def __post_init__(self):
        slots = list(self.informable) + list(self.requestable)
        if len(slots) != len(set(slots)):
            raise ValueError(f"duplicate slot names in domain {self.name!r}")

    @property
    def all_slots(self) -> tuple[str, ...]:
        return tuple(self.informable) + self.requestable


@dataclass(frozen=True)
class Ontology:
    """Ordered collection of domain schemas."""

    domains: tuple[DomainSchema, ...]

    def __post_init__(self):
        names = [d.name for d in self.domains]
        if len(names) != len(set(names)):
            raise ValueError("duplicate domain names")

    @property
    def domain_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.domains)

    def domain(self, name: str) -> DomainSchema:
        for d in self.domains:
            if d.name == name:
                return d
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "domains": [
                {
                    "name": d.name,
                    "informable": {s: list(v) for s, v in d.informable.items()},
                    "requestable": list(d.requestable),
                }
                for d in self.domains
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Ontology":
        return cls(
            domains=tuple(
                DomainSchema(
                    name=d["name"],
                    informable={s: tuple(v) for s, v in d["informable"].items()},
                    requestable=tuple(d["requestable"]),
                )
                for d in obj["domains"]
            )
        )


@dataclass(frozen=True)
class EntityDatabase:
    """Per-domain entity tables; records are plain slot->value mappings."""

    entities: dict[str, tuple[dict[str, str], ...]]

    def query(self, domain: str, constraints: dict[str, str]) -> list[dict[str, str]]:
        """Entities of `domain` matching every constraint exactly, in table order.

        Unknown slot names make a constraint unmatchable (empty result), not
        an error.
        """
        if domain not in self.entities:
            raise KeyError(f"unknown domain {domain!r}")
        out = []
        for record in self.entities[domain]:
            if all(record.get(slot) == value for slot, value in constraints.items()):
                out.append(record)
        return out

    def by_name(self, domain: str, name: str) -> dict[str, str] | None:
        for record in self.entities.get(domain, ()):
            if record[NAME_SLOT] == name:
                return record
        return None

    def to_json(self) -> dict:
        return {"entities": {d: list(rs) for d, rs in self.entities.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "EntityDatabase":
        return cls(entities={d: tuple(rs) for d, rs in obj["entities"].items()})


@dataclass(frozen=True)
class DomainGoal:
    domain: str
    constraints: dict[str, str]
    requests: tuple[str, ...]


@dataclass(frozen=True)
class UserGoal:
    """Per-domain constraints (Info) and requested slots (Reqt), in visit order."""

    parts: tuple[DomainGoal, ...]

    @property
    def domains(self) -> tuple[str, ...]:
        return tuple(p.domain for p in self.parts)

    def part(self, domain: str) -> DomainGoal:
        for p in self.parts:
            if p.domain == domain:
                return p
        raise KeyError(domain)

    @property
    def n_requests(self) -> int:
        return sum(len(p.requests) for p in self.parts)

    def to_json(self) -> dict:
        return {
            "domains": [
                {
                    "domain": p.domain,
                    "constraints": dict(p.constraints),
                    "requests": list(p.requests),
                }
                for p in self.parts
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UserGoal":
        return cls(
            parts=tuple(
                DomainGoal(d["domain"], dict(d["constraints"]), tuple(d["requests"]))
                for d in obj["domains"]
            )
        )

    def serialize(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def validate_goal(goal: UserGoal, ontology: Ontology, db: EntityDatabase) -> None:
    """Raise ValueError if the goal violates schema membership or achievability."""
    for part in goal.parts:
        schema = ontology.domain(part.domain)
        for slot in part.constraints:
            if slot not in schema.informable:
                raise ValueError(f"{part.domain}.{slot} is not informable")
        for slot in part.requests:
            if slot not in schema.requestable:
                raise ValueError(f"{part.domain}.{slot} is not requestable")
        if not db.query(part.domain, part.constraints):
            raise ValueError(f"no entity satisfies {part.domain} constraints")


def default_ontology() -> Ontology:
    """The built-in three-domain world used by tests and the CLI defaults."""
    area = ("centre", "north", "south", "east", "west")
    price = ("cheap", "moderate", "expensive")
    return Ontology(
        domains=(
            DomainSchema(
                name="hotel",
                informable={
                    "area": area,
                    "pricerange": price,
                    "stars": ("two", "three", "four", "five"),
                    "parking": ("yes", "no", "limited"),
                    "type": ("guesthouse", "hostel", "resort", "inn"),
                },
                requestable=(NAME_SLOT, "phone", "address", "postcode"),
            ),
            DomainSchema(
                name="restaurant",
                informable={
                    "area": area,
                    "pricerange": price,
                    "food": ("italian", "chinese", "indian", "british", "thai", "mexican"),
                    "dining": ("casual", "formal", "buffet"),
                    "seating": ("indoor", "outdoor", "terrace"),
                },
                requestable=(NAME_SLOT, "phone", "address", "postcode"),
            ),
            DomainSchema(
                name="attraction",
                informable={
                    "area": area,
                    "type": ("museum", "park", "gallery", "theatre", "cinema"),
                    "pricerange": ("free", "moderate", "expensive"),
                    "audience": ("families", "adults", "students"),
                },
                requestable=(NAME_SLOT, "phone", "address", "fee"),
            ),
        )
    )


def _entity_names(rng: np.random.Generator, count: int, domain: str) -> list[str]:
    suffix = {"hotel": "house", "restaurant": "kitchen", "attraction": "court"}.get(domain, "place")
    names: list[str] = []
    seen: set[str] = set()
    while len(names) < count:
        adj = _NAME_ADJECTIVES[rng.integers(len(_NAME_ADJECTIVES))]
        noun = _NAME_NOUNS[rng.integers(len(_NAME_NOUNS))]
        name = f"the {adj} {noun} {suffix}"
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def _requestable_value(rng: np.random.Generator, slot: str) -> str:
    if slot == "phone":
        return "0" + "".join(str(rng.integers(10)) for _ in range(9))
    if slot == "address":
        number = int(rng.integers(1, 99))
        return f"{number} {_STREETS[rng.integers(len(_STREETS))]}"
    if slot == "postcode":
        letters = "abcdefghjkmnpqrstuvwxyz"
        return "cb" + str(rng.integers(1, 9)) + letters[rng.integers(len(letters))] + letters[rng.integers(len(letters))]
    if slot == "fee":
        amount = int(rng.integers(1, 9))
        return rng.choice(["free", f"{amount} pounds"])
    raise ValueError(f"no generator for requestable slot {slot!r}")


def generate_database(ontology: Ontology, seed: int, per_domain: tuple[int, int] = (40, 60)) -> EntityDatabase:
    """Seeded entity tables: unique records, every informable value covered."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDB)))
    entities: dict[str, tuple[dict[str, str], ...]] = {}
    for schema in ontology.domains:
        count = int(rng.integers(per_domain[0], per_domain[1] + 1))
        names = _entity_names(rng, count, schema.name)
        records: list[dict[str, str]] = []
        seen: set[tuple[str, ...]] = set()
        for name in names:
            while True:
                record = {NAME_SLOT: name}
                for slot, values in schema.informable.items():
                    record[slot] = str(values[rng.integers(len(values))])
                for slot in schema.requestable:
                    if slot != NAME_SLOT:
                        record[slot] = _requestable_value(rng, slot)
                key = tuple(record[s] for s in schema.informable)
                # names are unique, but reject duplicate informable profiles
                # only if the whole record collides (keeps match checks clean)
                full_key = tuple(sorted(record.items()))
                if full_key not in seen:
                    seen.add(full_key)
                    records.append(record)
                    break
        # patch coverage: every informable value must appear in >=1 entity
        for slot, values in schema.informable.items():
            present = {r[slot] for r in records}
            for value in values:
                if value not in present:
                    victim = records[int(rng.integers(len(records)))]
                    victim[slot] = value
        entities[schema.name] = tuple(records)
    return EntityDatabase(entities=entities)


def generate_goal(
    rng_seed: int,
    ontology: Ontology,
    db: EntityDatabase,
    n_domains: int,
    max_retries: int = 20,
) -> UserGoal:
    """Seeded achievable goal over `n_domains` domains (constraints are a
    projection of a concrete entity, so a matching entity always exists)."""
    if not 1 <= n_domains <= len(ontology.domains):
        raise ValueError(f"n_domains={n_domains} out of range for this ontology")
    rng = np.random.default_rng(np.random.SeedSequence((rng_seed, 0x60A1)))
    for _ in range(max_retries):
        order = rng.permutation(len(ontology.domains))[:n_domains]
        parts = []
        ok = True
        for idx in order:
            schema = ontology.domains[int(idx)]
            pool = db.entities.get(schema.name, ())
            if not pool:
                ok = False
                break
            entity = pool[int(rng.integers(len(pool)))]
            lo = min(2, len(schema.informable))
            hi = min(4, len(schema.informable))
            n_con = int(rng.integers(lo, hi + 1))
            slots = list(schema.informable)
            con_slots = [slots[i] for i in rng.permutation(len(slots))[:n_con]]
            constraints = {s: entity[s] for s in sorted(con_slots)}
            reqable = [s for s in schema.requestable]
            n_req = int(rng.integers(1, min(3, len(reqable)) + 1))
            req_slots = tuple(sorted(reqable[i] for i in rng.permutation(len(reqable))[:n_req]))
            parts.append(DomainGoal(schema.name, constraints, req_slots))
        if not ok:
            continue
        goal = UserGoal(parts=tuple(parts))
        try:
            validate_goal(goal, ontology, db)
        except ValueError:
            continue
        return goal
    raise GoalGenerationError(f"no achievable goal after {max_retries} retries")


def save_world(path, ontology: Ontology, db: EntityDatabase) -> None:
    """Human-readable JSON file with both the schemas and the entity tables."""
    obj = {**ontology.to_json(), **db.to_json()}
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_world(path) -> tuple[Ontology, EntityDatabase]:
    with open(path) as fh:
        obj = json.load(fh)
    return Ontology.from_json(obj), EntityDatabase.from_json(obj)
