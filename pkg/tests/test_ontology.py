import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipedial.ontology import (
    DomainGoal,
    DomainSchema,
    EntityDatabase,
    GoalGenerationError,
    Ontology,
    UserGoal,
    default_ontology,
    generate_database,
    generate_goal,
    validate_goal,
)


def test_default_ontology_shape(world):
    assert len(world.ontology.domains) >= 3
    for schema in world.ontology.domains:
        assert 4 <= len(schema.informable) <= 6
        for values in schema.informable.values():
            assert 3 <= len(values) <= 6
        assert 3 <= len(schema.requestable) <= 4


def test_duplicate_slot_names_rejected():
    with pytest.raises(ValueError):
        DomainSchema(name="x", informable={"area": ("a", "b", "c")}, requestable=("area",))


def test_database_covers_every_value(world):
    for schema in world.ontology.domains:
        records = world.db.entities[schema.name]
        assert 40 <= len(records) <= 60
        for slot, values in schema.informable.items():
            present = {r[slot] for r in records}
            assert set(values) <= present
        # no duplicate records
        keys = [tuple(sorted(r.items())) for r in records]
        assert len(keys) == len(set(keys))


def test_paper_example_goal_shape(world):
    goal = UserGoal(
        parts=(
            DomainGoal(
                domain="attraction",
                constraints={"area": "centre", "type": "museum"},
                requests=("fee", "address"),
            ),
        )
    )
    validate_goal(goal, world.ontology, world.db)  # achievable in the seeded world


def test_single_entity_domain_forces_constraints():
    schema = DomainSchema(
        name="shop", informable={"color": ("red", "blue", "green")}, requestable=("name", "phone")
    )
    ontology = Ontology(domains=(schema,))
    db = EntityDatabase(entities={"shop": ({"name": "the only shop", "color": "red", "phone": "0123"},)})
    goal = generate_goal(5, ontology, db, 1)
    entity = db.entities["shop"][0]
    for slot, value in goal.parts[0].constraints.items():
        assert entity[slot] == value


def test_goal_determinism_seed_42(world):
    a = generate_goal(42, world.ontology, world.db, 2)
    b = generate_goal(42, world.ontology, world.db, 2)
    assert a.serialize() == b.serialize()


def test_goal_n_domains_out_of_range(world):
    with pytest.raises(ValueError):
        generate_goal(1, world.ontology, world.db, 4)


def test_goal_generation_failure_on_empty_domain():
    ontology = default_ontology()
    db = EntityDatabase(entities={d.name: () for d in ontology.domains})
    with pytest.raises(GoalGenerationError):
        generate_goal(1, ontology, db, 1)


def test_query_empty_constraints_returns_all(world):
    for schema in world.ontology.domains:
        assert world.db.query(schema.name, {}) == list(world.db.entities[schema.name])


def test_query_singleton_matches_brute_force(world):
    # oracle: independent linear scan
    entity = world.db.entities["hotel"][7]
    constraints = {s: entity[s] for s in world.ontology.domain("hotel").informable}
    expected = [r for r in world.db.entities["hotel"] if all(r[s] == v for s, v in constraints.items())]
    assert world.db.query("hotel", constraints) == expected
    assert entity in expected


def test_query_contradictory_constraints_empty(world):
    assert world.db.query("hotel", {"area": "underwater"}) == []


def test_query_unknown_slot_is_unmatchable(world):
    assert world.db.query("hotel", {"altitude": "high"}) == []


def test_query_unknown_domain_raises(world):
    with pytest.raises(KeyError):
        world.db.query("cinema", {})


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_query_monotone_under_added_constraint(world, seed):
    rng = np.random.default_rng(seed)
    schema = world.ontology.domains[int(rng.integers(3))]
    slots = list(schema.informable)
    base_n = int(rng.integers(0, len(slots)))  # strictly fewer than all slots
    base = {s: str(schema.informable[s][rng.integers(len(schema.informable[s]))]) for s in slots[:base_n]}
    extra_slot = slots[base_n + int(rng.integers(len(slots) - base_n))]
    extra_value = str(schema.informable[extra_slot][rng.integers(len(schema.informable[extra_slot]))])
    wide = world.db.query(schema.name, base)
    narrow = world.db.query(schema.name, {**base, extra_slot: extra_value})
    assert len(narrow) <= len(wide)
    assert all(r in wide for r in narrow)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n_domains=st.integers(1, 3))
def test_generated_goals_always_achievable(world, seed, n_domains):
    goal = generate_goal(seed, world.ontology, world.db, n_domains)
    assert len(goal.parts) == n_domains
    for part in goal.parts:
        assert 2 <= len(part.constraints) <= 4
        assert 1 <= len(part.requests) <= 3
        assert world.db.query(part.domain, part.constraints)


def test_world_json_roundtrip(tmp_path, world):
    from pipedial.ontology import load_world, save_world

    path = tmp_path / "world.json"
    save_world(path, world.ontology, world.db)
    ontology, db = load_world(path)
    assert ontology == world.ontology
    assert db.entities == world.db.entities
    # byte-identical regeneration
    path2 = tmp_path / "world2.json"
    save_world(path2, ontology, db)
    assert path.read_bytes() == path2.read_bytes()


def test_database_regeneration_deterministic():
    ontology = default_ontology()
    a = generate_database(ontology, 99)
    b = generate_database(ontology, 99)
    assert a.entities == b.entities
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)
