"""Session orchestration: lifecycle state machine, per-session single-writer
executor, command queues, and the live event stream."""
from __future__ import annotations

import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional

from ..errors import (
    IllegalTransition,
    InvalidCommand,
    UnknownScenario,
    UnknownSession,
    ValidationError,
)
from ..netsim import Simulator
from ..scenario import Scenario, builtin_scenario_path, load_scenario
from .storage import TraceStore

SESSION_STATES = ("CREATED", "SCHEDULED", "RUNNING", "COMPLETED", "ABORTED")

LEGAL_TRANSITIONS = {
    ("CREATED", "SCHEDULED"),
    ("SCHEDULED", "RUNNING"),
    ("RUNNING", "COMPLETED"),
    ("RUNNING", "ABORTED"),
    ("CREATED", "ABORTED"),
}

ACTIVE_STATES = ("CREATED", "SCHEDULED", "RUNNING")


@dataclass
class Session:
    session_id: str
    owner: str
    scenario_ref: str
    policy: str
    state: str = "CREATED"
    created_at: float = 0.0
    started_at: Optional[float] = None
    ended_at: Optional[float] = None
    result_dataset_id: Optional[str] = None
    realtime: bool = False
    summary: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "owner": self.owner,
            "scenario_ref": self.scenario_ref,
            "policy": self.policy,
            "state": self.state,
            "created_at": self.created_at,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "result_dataset_id": self.result_dataset_id,
            "realtime": self.realtime,
            "summary": self.summary,
        }


class EventBus:
    """Per-session append-only event feed with resumable cursors."""

    def __init__(self):
        self._events: list[tuple[int, dict]] = []
        self._cond = threading.Condition()
        self._closed = False

    def publish(self, payload: dict) -> int:
        with self._cond:
            event_id = len(self._events) + 1
            self._events.append((event_id, payload))
            self._cond.notify_all()
            return event_id

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def stream(self, last_event_id: int = 0,
               timeout_s: Optional[float] = None) -> Iterator[tuple[int, dict]]:
        cursor = last_event_id
        deadline = time.monotonic() + timeout_s if timeout_s else None
        while True:
            with self._cond:
                while cursor >= len(self._events) and not self._closed:
                    wait = None
                    if deadline is not None:
                        wait = deadline - time.monotonic()
                        if wait <= 0:
                            return
                    if not self._cond.wait(timeout=wait if wait is not None else 0.5):
                        if deadline is not None and time.monotonic() >= deadline:
                            return
                batch = self._events[cursor:]
                closed = self._closed
            for event_id, payload in batch:
                cursor = event_id
                yield event_id, payload
            if closed and cursor >= len(self._events):
                return


@dataclass
class _Runtime:
    bus: EventBus = field(default_factory=EventBus)
    commands: deque = field(default_factory=deque)
    lock: threading.Lock = field(default_factory=threading.Lock)
    stop: threading.Event = field(default_factory=threading.Event)
    thread: Optional[threading.Thread] = None
    scenario: Optional[Scenario] = None


class SessionManager:
    """CBF-style orchestrator: owns session state and the executors."""

    def __init__(self, store: TraceStore,
                 scenario_paths: Optional[dict[str, str]] = None):
        self.store = store
        self._scenarios = dict(scenario_paths or {})
        self._sessions: dict[str, Session] = {}
        self._runtimes: dict[str, _Runtime] = {}
        self._lock = threading.Lock()
        self._restore()

    def _restore(self) -> None:
        for sid in self.store.session_ids():
            meta = self.store.read_meta(sid)
            self._sessions[sid] = Session(
                session_id=sid,
                owner=meta.get("owner", ""),
                scenario_ref=meta.get("scenario_ref", ""),
                policy=meta.get("policy", "REACTIVE"),
                state=meta.get("state", "ABORTED"),
                created_at=meta.get("created_at", 0.0),
                started_at=meta.get("started_at"),
                ended_at=meta.get("ended_at"),
                result_dataset_id=meta.get("result_dataset_id"),
                realtime=meta.get("realtime", False),
                summary=meta.get("summary"),
            )
            self._runtimes[sid] = _Runtime()

    # -- scenarios

    def resolve_scenario(self, scenario_ref: str) -> Scenario:
        path = self._scenarios.get(scenario_ref)
        if path is None:
            builtin = builtin_scenario_path(scenario_ref)
            if builtin.exists():
                path = builtin
        if path is None:
            raise UnknownScenario(scenario_ref)
        return load_scenario(path)

    def register_scenario(self, name: str, path) -> None:
        self._scenarios[name] = path

    # -- lifecycle

    def active_session_count(self, owner: str) -> int:
        with self._lock:
            return sum(1 for s in self._sessions.values()
                       if s.owner == owner and s.state in ACTIVE_STATES)

    def create_session(self, owner: str, scenario_ref: str,
                       policy: str = "REACTIVE", realtime: bool = False) -> Session:
        if policy not in ("REACTIVE", "PROACTIVE"):
            raise ValidationError(f"unknown policy {policy!r}")
        scenario = self.resolve_scenario(scenario_ref)  # validates early
        session_id = uuid.uuid4().hex[:12]
        session = Session(
            session_id=session_id,
            owner=owner,
            scenario_ref=scenario_ref,
            policy=policy,
            created_at=time.time(),
            realtime=realtime,
        )
        self.store.create_session(session_id, session.to_dict())
        runtime = _Runtime(scenario=scenario)
        with self._lock:
            self._sessions[session_id] = session
            self._runtimes[session_id] = runtime
        return session

    def get_session(self, session_id: str) -> Session:
        with self._lock:
            if session_id not in self._sessions:
                raise UnknownSession(session_id)
            return self._sessions[session_id]

    def _persist(self, session: Session) -> None:
        self.store.update_meta(session.session_id, session.to_dict())

    def transition_session(self, session_id: str, target_state: str,
                           wait: bool = False) -> Session:
        session = self.get_session(session_id)
        if target_state not in SESSION_STATES:
            raise ValidationError(f"unknown state {target_state!r}")
        if (session.state, target_state) not in LEGAL_TRANSITIONS:
            raise IllegalTransition(session.state, target_state)
        runtime = self._runtimes[session_id]
        if target_state == "RUNNING":
            session.state = "RUNNING"
            session.started_at = time.time()
            self._persist(session)
            runtime.thread = threading.Thread(
                target=self._execute, args=(session_id,), daemon=True)
            runtime.thread.start()
            if wait:
                runtime.thread.join()
                session = self.get_session(session_id)
            return session
        if target_state == "ABORTED" and session.state == "RUNNING":
            runtime.stop.set()
            if runtime.thread is not None:
                runtime.thread.join(timeout=30)
            session = self.get_session(session_id)
            if session.state == "RUNNING":  # executor did not finish the abort
                session.state = "ABORTED"
                session.ended_at = time.time()
                self._persist(session)
            return session
        session.state = target_state
        if target_state in ("COMPLETED", "ABORTED"):
            session.ended_at = time.time()
        self._persist(session)
        return session

    # -- executor

    def _execute(self, session_id: str) -> None:
        session = self.get_session(session_id)
        runtime = self._runtimes[session_id]
        scenario = runtime.scenario or self.resolve_scenario(session.scenario_ref)
        simulator = Simulator(scenario, session.policy)

        def on_records(records):
            count = self.store.append(session_id, records)
            for record in records:
                runtime.bus.publish({"type": record.kind, "record": record.to_dict(),
                                     "ack_count": count})

        def command_source():
            with runtime.lock:
                commands = list(runtime.commands)
                runtime.commands.clear()
            return commands

        aborted = False
        try:
            _, summary = simulator.run(
                session_id=session_id,
                on_records=on_records,
                should_stop=runtime.stop.is_set,
                command_source=command_source,
                tick_sleep_s=simulator.config.tick_s if session.realtime else 0.0,
            )
            aborted = runtime.stop.is_set()
            session.summary = summary
        except Exception as exc:  # surface executor failures on the stream
            runtime.bus.publish({"type": "ERROR", "error": str(exc)})
            aborted = True
        session.state = "ABORTED" if aborted else "COMPLETED"
        session.ended_at = time.time()
        if session.state == "COMPLETED":
            dataset = self.store.seal(session_id)
            session.result_dataset_id = dataset["dataset_id"]
        self._persist(session)
        runtime.bus.publish({"type": "SESSION", "state": session.state,
                             "summary": session.summary})
        runtime.bus.close()

    # -- commands and events

    def queue_command(self, session_id: str, command: dict) -> None:
        session = self.get_session(session_id)
        if session.state != "RUNNING":
            raise InvalidCommand(f"session {session_id} is {session.state}, not RUNNING")
        runtime = self._runtimes[session_id]
        with runtime.lock:
            runtime.commands.append(command)

    def event_bus(self, session_id: str) -> EventBus:
        self.get_session(session_id)
        return self._runtimes[session_id].bus

    def scenario_for(self, session_id: str) -> Scenario:
        session = self.get_session(session_id)
        runtime = self._runtimes[session_id]
        if runtime.scenario is None:
            runtime.scenario = self.resolve_scenario(session.scenario_ref)
        return runtime.scenario

    def shutdown(self) -> None:
        """Abort every RUNNING session cleanly; acked records stay durable."""
        with self._lock:
            running = [s.session_id for s in self._sessions.values()
                       if s.state == "RUNNING"]
        for sid in running:
            self.transition_session(sid, "ABORTED")
