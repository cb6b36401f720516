"""System-wise benchmark runner and ablation comparison tables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .ontology import generate_goal
from .pipeline import DialogSystem, run_session
from .snapshot import Snapshot, World, world_fingerprint
from .usersim import AgendaUserSimulator

PHASE_EVAL = 4


@dataclass
class BenchmarkReport:
    n_sessions: int
    seed: int
    decode: str
    fingerprint: str
    mean_turns: float
    mean_inform_recall: float
    mean_match_rate: float
    success_rate: float
    per_domain: dict[int, dict] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "seed": self.seed,
            "decode": self.decode,
            "fingerprint": self.fingerprint,
            "mean_turns": self.mean_turns,
            "mean_inform_recall": self.mean_inform_recall,
            "mean_match_rate": self.mean_match_rate,
            "success_rate": self.success_rate,
            "per_domain": {str(k): v for k, v in sorted(self.per_domain.items())},
        }

    def serialize(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> "BenchmarkReport":
        return cls(
            n_sessions=obj["n_sessions"],
            seed=obj["seed"],
            decode=obj["decode"],
            fingerprint=obj["fingerprint"],
            mean_turns=obj["mean_turns"],
            mean_inform_recall=obj["mean_inform_recall"],
            mean_match_rate=obj["mean_match_rate"],
            success_rate=obj["success_rate"],
            per_domain={int(k): v for k, v in obj["per_domain"].items()},
        )

    def text_table(self) -> str:
        lines = [
            f"sessions: {self.n_sessions}  seed: {self.seed}  decode: {self.decode}",
            f"{'scope':<12}{'Turns':>8}{'Info.':>8}{'Match.':>8}{'Succ.':>8}",
            f"{'overall':<12}{self.mean_turns:>8.2f}{self.mean_inform_recall:>8.3f}"
            f"{self.mean_match_rate:>8.3f}{self.success_rate:>8.3f}",
        ]
        for count, row in sorted(self.per_domain.items()):
            lines.append(
                f"{f'{count}-domain':<12}{row['turns']:>8.2f}{row['inform']:>8.3f}"
                f"{row['match']:>8.3f}{row['success']:>8.3f}"
            )
        return "\n".join(lines) + "\n"


def run_benchmark(
    world: World,
    config: RunConfig,
    policy,
    n_sessions: int,
    seed: int,
    system_nlu=None,
    user_nlu=None,
    act_level: bool = False,
    decode: str | None = None,
    n_domains: int | None = None,
) -> BenchmarkReport:
    """Run n_sessions independent seeded sessions and aggregate the judge.

    Goal seeds depend only on (seed, session index), so reports over the same
    benchmark seed are paired across systems.
    """
    decode = decode or config.eval_decode
    system = DialogSystem(
        world.ontology,
        world.db,
        world.vectorizer,
        policy,
        nlu=None if act_level else system_nlu,
        system_bank=None if act_level else world.banks.system,
        decode=decode,
    )
    turns = recall = match = success = 0.0
    per_domain: dict[int, dict] = {}
    for i in range(n_sessions):
        goal_rng = np.random.default_rng(np.random.SeedSequence((seed, PHASE_EVAL, i, 0)))
        count = n_domains if n_domains is not None else int(goal_rng.integers(1, 4))
        goal = generate_goal(int(goal_rng.integers(2**31)), world.ontology, world.db, count)
        sim = AgendaUserSimulator(
            goal,
            world.ontology,
            world.db,
            np.random.default_rng(np.random.SeedSequence((seed, PHASE_EVAL, i, 1))),
            user_nlu=None if act_level else user_nlu,
            user_bank=None if act_level else world.banks.user,
            max_initiative=config.max_initiative,
            patience=config.user_patience,
        )
        rng = np.random.default_rng(np.random.SeedSequence((seed, PHASE_EVAL, i, 2)))
        result = run_session(system, sim, rng, act_level=act_level, max_turns=config.max_turns)
        judged = result.judged
        turns += judged.turns
        recall += judged.inform_recall
        match += judged.match_rate
        success += judged.success
        row = per_domain.setdefault(
            len(goal.parts), {"sessions": 0, "turns": 0.0, "inform": 0.0, "match": 0.0, "success": 0.0}
        )
        row["sessions"] += 1
        row["turns"] += judged.turns
        row["inform"] += judged.inform_recall
        row["match"] += judged.match_rate
        row["success"] += judged.success
    for row in per_domain.values():
        for key in ("turns", "inform", "match", "success"):
            row[key] = row[key] / row["sessions"]
    return BenchmarkReport(
        n_sessions=n_sessions,
        seed=seed,
        decode=decode,
        fingerprint=world_fingerprint(config, world),
        mean_turns=turns / n_sessions,
        mean_inform_recall=recall / n_sessions,
        mean_match_rate=match / n_sessions,
        success_rate=success / n_sessions,
        per_domain=per_domain,
    )


def run_benchmark_snapshot(snapshot: Snapshot, n_sessions: int, seed: int,
                           decode: str | None = None) -> BenchmarkReport:
    return run_benchmark(
        snapshot.world,
        snapshot.config,
        snapshot.policy,
        n_sessions,
        seed,
        system_nlu=snapshot.system_nlu,
        user_nlu=snapshot.user_nlu,
        decode=decode,
    )


def compare(named_reports: list[tuple[str, BenchmarkReport]]) -> tuple[str, dict]:
    """Ablation-style table; reports must share a world fingerprint.

    Repeated names (several seeds of one config) aggregate to mean +- stddev.
    """
    if len(named_reports) < 2:
        raise ValueError("need at least two reports to compare")
    fingerprints = {report.fingerprint for _, report in named_reports}
    if len(fingerprints) > 1:
        raise ValueError(f"mismatched world fingerprints: {sorted(fingerprints)}")
    groups: dict[str, list[BenchmarkReport]] = {}
    order: list[str] = []
    for name, report in named_reports:
        if name not in groups:
            order.append(name)
        groups.setdefault(name, []).append(report)
    header = f"{'system':<20}{'Turns':>14}{'Info.':>14}{'Match.':>14}{'Succ.':>14}"
    lines = [header]
    table: dict[str, dict] = {}
    for name in order:
        reports = groups[name]
        cells = {}
        for key, attr in (
            ("turns", "mean_turns"),
            ("inform", "mean_inform_recall"),
            ("match", "mean_match_rate"),
            ("success", "success_rate"),
        ):
            values = np.array([getattr(r, attr) for r in reports])
            cells[key] = {"mean": float(values.mean()), "std": float(values.std())}
        table[name] = {"n_reports": len(reports), **cells}
        if len(reports) == 1:
            lines.append(
                f"{name:<20}{cells['turns']['mean']:>14.2f}{cells['inform']['mean']:>14.3f}"
                f"{cells['match']['mean']:>14.3f}{cells['success']['mean']:>14.3f}"
            )
        else:
            lines.append(
                f"{name:<20}"
                + "".join(
                    f"{cells[k]['mean']:>8.3f}+-{cells[k]['std']:<4.3f}"
                    for k in ("turns", "inform", "match", "success")
                )
            )
    if len(order) == 2:
        first, second = order[0], order[-1]
        delta = table[second]["success"]["mean"] - table[first]["success"]["mean"]
        lines.append(f"success delta ({second} - {first}): {delta:+.3f}")
        table["success_delta"] = delta
    return "\n".join(lines) + "\n", table
