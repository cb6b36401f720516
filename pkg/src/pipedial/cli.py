"""Single command-line entry point: asset generation, training, benchmarking,
terminal chat, and the HTTP service.

Exit codes: 0 success, 1 validation error (bad arguments/paths/config),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .benchmark import run_benchmark_snapshot
from .config import ABLATIONS, RunConfig
from .data import build_corpus, save_corpus
from .ontology import default_ontology, generate_database, generate_goal
from .pipeline import DialogSystem
from .snapshot import Snapshot, World
from .trainer import train_run
from .usersim import TurnRecord, judge, trace_to_jsonl

DEFAULT_PORT = 8713


class ValidationError(Exception):
    pass


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for key in ("seed", "epochs", "batch_size", "eval_sessions", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "ablation", None):
        config = config.apply_ablation(args.ablation)
    if config.workers < 1:
        raise ValidationError("--workers must be >= 1")
    return config


def _print_config(config: RunConfig) -> None:
    print("# resolved configuration")
    print(config.describe())


def cmd_gen(args) -> int:
    config = _load_config(args)
    if os.path.exists(args.out) and os.listdir(args.out) and not args.force:
        raise ValidationError(f"output dir {args.out!r} is not empty (use --force)")
    _print_config(config)
    ontology = default_ontology()
    db = generate_database(ontology, config.world_seed)
    world = World.build(ontology, db)
    world.save_assets(args.out)
    corpus = build_corpus(world, "user", world.banks.offline, config.offline_corpus_size, config.world_seed)
    save_corpus(os.path.join(args.out, "corpus_offline.json"), corpus)
    config.save(os.path.join(args.out, "config.txt"))
    print(f"assets written to {args.out} ({len(corpus)} offline examples)")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    _print_config(config)
    offline_corpus = None
    if args.assets:
        world = World.load_assets(args.assets)
        asset_config_path = os.path.join(args.assets, "config.txt")
        if os.path.exists(asset_config_path):
            asset_config = RunConfig.load(asset_config_path)
            for key in ("world_seed", "offline_corpus_size"):
                if getattr(asset_config, key) != getattr(config, key):
                    raise ValidationError(
                        f"asset/config mismatch on {key}: assets have "
                        f"{getattr(asset_config, key)}, run config has {getattr(config, key)}"
                    )
        corpus_path = os.path.join(args.assets, "corpus_offline.json")
        if os.path.exists(corpus_path):
            from .data import load_corpus

            offline_corpus = load_corpus(corpus_path)
    else:
        world = World.default(config.world_seed)
    train_run(world, config, out_dir=args.out, save_every=args.save_every,
              offline_corpus=offline_corpus)
    print(f"training artifacts in {args.out}")
    return 0


def cmd_eval(args) -> int:
    if not os.path.isdir(args.snapshot):
        raise ValidationError(f"snapshot dir {args.snapshot!r} not found")
    snapshot = Snapshot.load(args.snapshot)
    report = run_benchmark_snapshot(snapshot, args.sessions, args.seed, decode=args.decode)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.serialize())
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(report.text_table())
    print(report.text_table(), end="")
    if args.min_success is not None and report.success_rate < args.min_success:
        print(f"success rate {report.success_rate:.3f} below floor {args.min_success}", file=sys.stderr)
        return 2
    return 0


def cmd_chat(args) -> int:
    if not os.path.isdir(args.snapshot):
        raise ValidationError(f"snapshot dir {args.snapshot!r} not found")
    snapshot = Snapshot.load(args.snapshot)
    world = snapshot.world
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    goal = generate_goal(int(rng.integers(2**31)), world.ontology, world.db, args.domains)
    system = DialogSystem(
        world.ontology, world.db, world.vectorizer, snapshot.policy,
        nlu=snapshot.system_nlu, system_bank=world.banks.system, decode="greedy",
    )
    print("your goal:")
    print(json.dumps(goal.to_json(), indent=2))
    print('type your messages; "quit" ends the session\n')
    trace: list[TurnRecord] = []
    for turn_index in range(1, snapshot.config.max_turns + 1):
        try:
            text = input("you> ").strip()
        except EOFError:
            break
        if text.lower() in ("quit", "exit"):
            break
        tokens = text.lower().split()
        result = system.respond(user_utterance=tokens, rng=rng)
        reply = " ".join(result.utterance or ["..."])
        print(f"sys> {reply}")
        # no user NLU exists in a human chat: the judge sees the system NLU's
        # parse as the user acts and the system's own acts as recovered
        trace.append(
            TurnRecord(
                turn=turn_index,
                user_acts=tuple(sorted(snapshot.system_nlu.predict(tokens))),
                user_utterance=tokens,
                system_acts=result.full_acts,
                system_utterance=result.utterance,
                recovered_acts=result.full_acts,
            )
        )
    verdict = judge(goal, trace, world.db, max_turns=snapshot.config.max_turns)
    print(f"\njudge: inform_recall={verdict.inform_recall:.2f} match_rate={verdict.match_rate:.2f} "
          f"success={verdict.success} turns={verdict.turns}")
    if args.transcript:
        with open(args.transcript, "w") as fh:
            fh.write(trace_to_jsonl(trace))
        print(f"transcript written to {args.transcript}")
    return 0


def cmd_serve(args) -> int:
    if not os.path.isdir(args.snapshot):
        raise ValidationError(f"snapshot dir {args.snapshot!r} not found")
    import uvicorn

    from .service import create_app

    app = create_app(
        snapshot_dirs={"default": args.snapshot}, store_path=args.store, decode=args.decode
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipedial", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="master seed override")

    p = sub.add_parser("gen", parents=[common], help="generate world, template banks, offline corpus")
    p.add_argument("--out", default="assets", help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite non-empty output dir")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="pretrain and run joint epochs")
    p.add_argument("--assets", help="assets dir from `pipedial gen` (default: built in memory)")
    p.add_argument("--out", default="runs/latest", help="output directory")
    p.add_argument("--epochs", type=int, help="joint epochs override")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="transitions per epoch")
    p.add_argument("--ablation", choices=sorted(ABLATIONS), help="named mechanism set")
    p.add_argument("--save-every", dest="save_every", type=int, default=0, help="snapshot every N epochs")
    p.add_argument("--workers", type=int, help="max rollout parallelism (sessions are sequential at 1)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="run the system-wise benchmark on a snapshot")
    p.add_argument("--snapshot", required=True, help="snapshot directory")
    p.add_argument("--sessions", type=int, default=1000)
    p.add_argument("--eval-seed", dest="seed", type=int, default=97)
    p.add_argument("--decode", choices=("sample", "greedy"), default=None)
    p.add_argument("--out", default="reports/latest")
    p.add_argument("--min-success", type=float, default=None, help="nonzero exit below this floor")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chat", parents=[common], help="interactive terminal chat against a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--domains", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--transcript", help="write the session trace here on exit")
    p.set_defaults(func=cmd_chat, seed=0)

    p = sub.add_parser("serve", parents=[common], help="run the human-evaluation HTTP service")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--store", default="sessions.jsonl", help="append-only session store path")
    p.add_argument("--decode", choices=("greedy", "sample"), default="greedy",
                   help="greedy replies by default; sampling behind this flag")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # noqa: BLE001 - stable exit-code contract
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
