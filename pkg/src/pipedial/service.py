"""HTTP session service for interactive chat and human evaluation.

Endpoints: POST /sessions, POST /sessions/{id}/utterances, POST
/sessions/{id}/verdict, GET /sessions/{id}, GET /metrics, GET /health.
Errors are {"code", "message"}.  Sessions persist to an append-only
JSON-lines store; every turn is written before the reply is returned, and
open sessions are rebuilt by deterministic replay on restart.  No response
field reveals which snapshot backs a session.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .ontology import generate_goal
from .pipeline import DialogSystem
from .snapshot import Snapshot

TURN_LIMIT = 20


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class CreateSessionBody(BaseModel):
    snapshot: str | None = None
    n_domains: int | None = None


class UtteranceBody(BaseModel):
    text: str


class VerdictBody(BaseModel):
    completed: bool
    values: dict[str, str] = {}


@dataclass
class LiveSession:
    session_id: str
    snapshot_name: str
    goal_json: dict
    system: DialogSystem
    rng: np.random.Generator
    turns: list[dict] = field(default_factory=list)
    closed: bool = False
    close_reason: str | None = None
    verdict: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def public_record(self) -> dict:
        return {
            "session_id": self.session_id,
            "goal": self.goal_json,
            "turns": self.turns,
            "closed": self.closed,
            "close_reason": self.close_reason,
            "verdict": self.verdict,
            "turn_limit": TURN_LIMIT,
        }


class SessionStore:
    """Append-only JSON-lines event log; replays into session state."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        with self._lock:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def events(self) -> list[dict]:
        if not os.path.exists(self.path):
            return []
        with open(self.path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


class DialogService:
    def __init__(self, snapshots: dict[str, Snapshot], store: SessionStore, decode: str = "greedy"):
        if not snapshots:
            raise ValueError("need at least one snapshot")
        self.snapshots = snapshots
        self.store = store
        self.decode = decode  # greedy by default: humans should not see stochastic regressions
        self.sessions: dict[str, LiveSession] = {}
        self._assign_rng = np.random.default_rng(0)
        self._recover()

    # -- construction helpers --------------------------------------------------
    def _build_system(self, snapshot: Snapshot) -> DialogSystem:
        world = snapshot.world
        return DialogSystem(
            world.ontology,
            world.db,
            world.vectorizer,
            snapshot.policy,
            nlu=snapshot.system_nlu,
            system_bank=world.banks.system,
            decode=self.decode,
        )

    def _recover(self) -> None:
        """Rebuild sessions from the store; replaying turns through the
        deterministic greedy pipeline restores open sessions' DST state."""
        for event in self.store.events():
            kind = event["event"]
            if kind == "created":
                snapshot = self.snapshots[event["snapshot"]]
                session = LiveSession(
                    session_id=event["session_id"],
                    snapshot_name=event["snapshot"],
                    goal_json=event["goal"],
                    system=self._build_system(snapshot),
                    rng=np.random.default_rng(event["rng_seed"]),
                )
                self.sessions[event["session_id"]] = session
            elif kind == "turn":
                session = self.sessions[event["session_id"]]
                session.turns.append(event["payload"])
                session.system.respond(
                    user_utterance=event["payload"]["user_text"].lower().split(), rng=session.rng
                )
            elif kind == "closed":
                session = self.sessions[event["session_id"]]
                session.closed = True
                session.close_reason = event["reason"]
            elif kind == "verdict":
                session = self.sessions[event["session_id"]]
                session.verdict = event["payload"]

    def _get(self, session_id: str) -> LiveSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ServiceError(404, "session_not_found", f"no session {session_id!r}") from None

    # -- operations ---------------------------------------------------------------
    def create_session(self, snapshot_name: str | None, n_domains: int | None) -> dict:
        if snapshot_name is None:
            names = sorted(self.snapshots)
            snapshot_name = names[int(self._assign_rng.integers(len(names)))]
        if snapshot_name not in self.snapshots:
            raise ServiceError(404, "snapshot_not_found", f"no snapshot {snapshot_name!r}")
        snapshot = self.snapshots[snapshot_name]
        world = snapshot.world
        if n_domains is not None and not 1 <= n_domains <= len(world.ontology.domains):
            raise ServiceError(400, "bad_n_domains", "n_domains must be between 1 and 3")
        session_id = uuid.uuid4().hex
        seed = int.from_bytes(bytes.fromhex(session_id[:8]), "big")
        goal_rng = np.random.default_rng(seed)
        count = n_domains if n_domains is not None else int(goal_rng.integers(1, 4))
        goal = generate_goal(int(goal_rng.integers(2**31)), world.ontology, world.db, count)
        session = LiveSession(
            session_id=session_id,
            snapshot_name=snapshot_name,
            goal_json=goal.to_json(),
            system=self._build_system(snapshot),
            rng=np.random.default_rng(seed + 1),
        )
        self.sessions[session_id] = session
        self.store.append(
            {
                "event": "created",
                "session_id": session_id,
                "snapshot": snapshot_name,
                "goal": goal.to_json(),
                "rng_seed": seed + 1,
            }
        )
        return {"session_id": session_id, "goal": goal.to_json(), "turn_limit": TURN_LIMIT}

    def post_utterance(self, session_id: str, text: str) -> dict:
        session = self._get(session_id)
        if not text or not text.strip():
            raise ServiceError(400, "empty_text", "utterance text must be non-empty")
        with session.lock:
            if session.closed:
                raise ServiceError(409, "session_closed", "session is closed")
            if len(session.turns) >= TURN_LIMIT:
                session.closed = True
                session.close_reason = "turn_limit"
                self.store.append(
                    {"event": "closed", "session_id": session_id, "reason": "turn_limit"}
                )
                raise ServiceError(409, "turn_limit", "20-turn cap reached; session closed as failed")
            tokens = text.lower().split()
            result = session.system.respond(user_utterance=tokens, rng=session.rng)
            reply = " ".join(result.utterance or [])
            turn_index = len(session.turns) + 1
            payload = {
                "turn": turn_index,
                "user_text": text,
                "reply": reply,
                "user_acts": [a.render() for a in sorted(session.system.nlu.predict(tokens))],
                "system_acts": [a.render() for a in result.full_acts],
            }
            # persist before replying: a crash after this line loses nothing
            self.store.append({"event": "turn", "session_id": session_id, "payload": payload})
            session.turns.append(payload)
            dialog_over = turn_index >= TURN_LIMIT
            if dialog_over:
                session.closed = True
                session.close_reason = "turn_limit"
                self.store.append(
                    {"event": "closed", "session_id": session_id, "reason": "turn_limit"}
                )
            return {"reply": reply, "turn_index": turn_index, "dialog_over": dialog_over}

    def submit_verdict(self, session_id: str, completed: bool, values: dict[str, str]) -> dict:
        session = self._get(session_id)
        with session.lock:
            if session.verdict is not None:
                raise ServiceError(409, "verdict_exists", "verdict already submitted")
            snapshot = self.snapshots[session.snapshot_name]
            world = snapshot.world
            per_slot: dict[str, dict] = {}
            all_match = True
            for part in session.goal_json["domains"]:
                domain = part["domain"]
                candidates = world.db.query(domain, part["constraints"])
                for slot in part["requests"]:
                    key = f"{domain}.{slot}"
                    submitted = values.get(key)
                    expected = sorted({e[slot] for e in candidates if slot in e})
                    match = submitted is not None and submitted.strip().lower() in expected
                    per_slot[key] = {"submitted": submitted, "match": match}
                    all_match = all_match and match
            verified = bool(completed and all_match)
            payload = {
                "completed": completed,
                "values": values,
                "per_slot": per_slot,
                "verified": verified,
                "turns": len(session.turns),
            }
            if not session.closed:
                session.closed = True
                session.close_reason = "verdict"
                self.store.append({"event": "closed", "session_id": session_id, "reason": "verdict"})
            session.verdict = payload
            self.store.append({"event": "verdict", "session_id": session_id, "payload": payload})
            return {"verified": verified, "per_slot": per_slot, "completed": completed}

    def get_session(self, session_id: str) -> dict:
        return self._get(session_id).public_record()

    def metrics(self) -> dict:
        closed = [s for s in self.sessions.values() if s.closed]
        judged = [s for s in closed if s.verdict is not None]
        verified = sum(1 for s in judged if s.verdict["verified"])
        return {
            "sessions": len(self.sessions),
            "closed": len(closed),
            "with_verdict": len(judged),
            "verified_successes": verified,
            "verified_success_rate": (verified / len(judged)) if judged else None,
            "mean_turns": (
                sum(len(s.turns) for s in closed) / len(closed) if closed else None
            ),
        }


def create_app(
    snapshot_dirs: dict[str, str] | None = None,
    snapshots: dict[str, Snapshot] | None = None,
    store_path: str = "sessions.jsonl",
    decode: str = "greedy",
) -> FastAPI:
    if snapshots is None:
        snapshots = {name: Snapshot.load(path) for name, path in (snapshot_dirs or {}).items()}
    service = DialogService(snapshots, SessionStore(store_path), decode=decode)
    app = FastAPI(title="pipedial human-evaluation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        return service.create_session(body.snapshot, body.n_domains)

    @app.post("/sessions/{session_id}/utterances")
    def post_utterance(session_id: str, body: UtteranceBody):
        return service.post_utterance(session_id, body.text)

    @app.post("/sessions/{session_id}/verdict")
    def submit_verdict(session_id: str, body: VerdictBody):
        return service.submit_verdict(session_id, body.completed, body.values)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return service.get_session(session_id)

    @app.get("/metrics")
    def metrics():
        return service.metrics()

    return app
