"""WebSocket session service.

One server process owns one authoritative session.  Clients connect to
``/session``, introduce themselves with HELLO, and then either watch
(role ``display``), drive the simulated scene with ACTION messages
(role ``actor``, sim mode), or feed detector output with DETECTIONS
messages (role ``detector``, external mode).

The session loop is the only writer of session state.  Incoming ACTIONs
queue FIFO and are applied at the next tick boundary, exactly like
scripted commands in a headless run, which is what makes a served
sim-mode session reproduce ``cmd_simulate`` transcripts tick for tick.
DETECTIONS frames buffer latest-wins with stale frames dropped.  Each
tick broadcasts, in order: one EVENT per guidance event, the current
HIGHLIGHTS, and every 15th tick a full SNAPSHOT; a SNAPSHOT is also sent
directly to each client on HELLO.

Every message carries ``v`` (protocol version, 1) and ``sid`` (session
id).  Unknown fields are ignored.  Malformed messages earn an
ERROR{MALFORMED} reply and leave the session untouched; role and mode
violations earn ERROR{ROLE} and ERROR{MODE}; an ACTION that is illegal
in the scene when its tick arrives earns the sender ERROR{ACTION}.
"""

from __future__ import annotations

import asyncio
import json
import time
from typing import Optional

from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .geometry import BBox2D
from .plan import AssemblyPlan
from .scene import Pick, Place, Remove, SceneError
from .session import SessionConfig, SessionCore

__all__ = [
    "PROTOCOL_VERSION",
    "ROLE_DISPLAY",
    "ROLE_ACTOR",
    "ROLE_DETECTOR",
    "ERR_MALFORMED",
    "ERR_ROLE",
    "ERR_MODE",
    "ERR_ACTION",
    "SNAPSHOT_EVERY_TICKS",
    "ClientState",
    "SessionServer",
    "run_session",
]

PROTOCOL_VERSION = 1

ROLE_DISPLAY = "display"
ROLE_ACTOR = "actor"
ROLE_DETECTOR = "detector"
_ROLES = (ROLE_DISPLAY, ROLE_ACTOR, ROLE_DETECTOR)

ERR_MALFORMED = "MALFORMED"
ERR_ROLE = "ROLE"
ERR_MODE = "MODE"
ERR_ACTION = "ACTION"

SNAPSHOT_EVERY_TICKS = 15


class _Malformed(Exception):
    pass


def _field(msg: dict, key: str, kinds, what: str):
    if key not in msg:
        raise _Malformed(f"missing field {key!r} in {what}")
    value = msg[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise _Malformed(f"field {key!r} has the wrong type in {what}")
    return value


def _parse_action(msg: dict):
    action = _field(msg, "action", str, "ACTION")
    part = _field(msg, "id", int, "ACTION")
    if action == "pick":
        return Pick(part)
    if action == "remove":
        return Remove(part)
    if action == "place":
        return Place(
            part,
            _field(msg, "x", int, "ACTION"),
            _field(msg, "y", int, "ACTION"),
            _field(msg, "layer", int, "ACTION"),
            _field(msg, "rot", int, "ACTION"),
        )
    raise _Malformed(f"unknown action {action!r}")


def _parse_boxes(msg: dict) -> list[BBox2D]:
    raw = _field(msg, "boxes", list, "DETECTIONS")
    boxes = []
    for entry in raw:
        if not isinstance(entry, dict):
            raise _Malformed("boxes entries must be objects")
        try:
            boxes.append(
                BBox2D(
                    _field(entry, "x0", (int, float), "box"),
                    _field(entry, "y0", (int, float), "box"),
                    _field(entry, "x1", (int, float), "box"),
                    _field(entry, "y1", (int, float), "box"),
                    _field(entry, "cls", str, "box"),
                    _field(entry, "conf", (int, float), "box"),
                )
            )
        except ValueError as e:
            raise _Malformed(str(e)) from None
    return boxes


def _box_json(box) -> dict:
    return {
        "center_x": box.center_x,
        "center_y": box.center_y,
        "extent_x": box.extent_x,
        "extent_y": box.extent_y,
        "height": box.height,
        "label": box.label,
    }


class ClientState:
    """Per-connection registration: the socket and its declared role."""

    def __init__(self, connection=None):
        self.connection = connection
        self.role: Optional[str] = None


class SessionServer:
    """Authoritative session loop plus the message protocol around it.

    Network plumbing stays out of the protocol methods: handle_message
    maps one inbound JSON string to reply dicts, and tick_once advances
    the session and returns the broadcast, so tests can drive a server
    deterministically without sockets.
    """

    def __init__(self, plan: AssemblyPlan, config: SessionConfig):
        self.core = SessionCore(plan, config)
        self.config = config
        self.sid = f"{plan.name}-{config.mode}-{config.noise.seed}"
        self.clients: dict = {}
        self._pending_actions: list[tuple[ClientState, object]] = []

    def _msg(self, type_: str, **fields) -> dict:
        return {"v": PROTOCOL_VERSION, "sid": self.sid, "type": type_, **fields}

    def _error(self, code: str, message: str) -> dict:
        return self._msg("ERROR", code=code, message=message)

    def _snapshot_msg(self) -> dict:
        return self._msg("SNAPSHOT", **self.core.snapshot())

    def handle_message(self, state: ClientState, raw: str) -> list[dict]:
        """Replies for one inbound frame; queues side effects for the tick."""
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            return [self._error(ERR_MALFORMED, "message is not valid JSON")]
        try:
            if not isinstance(msg, dict):
                raise _Malformed("message must be a JSON object")
            if _field(msg, "v", int, "message") != PROTOCOL_VERSION:
                raise _Malformed(f"unsupported protocol version {msg['v']!r}")
            _field(msg, "sid", str, "message")
            type_ = _field(msg, "type", str, "message")
            if type_ == "HELLO":
                return self._on_hello(state, msg)
            if type_ == "ACTION":
                return self._on_action(state, msg)
            if type_ == "DETECTIONS":
                return self._on_detections(state, msg)
            raise _Malformed(f"unknown message type {type_!r}")
        except _Malformed as e:
            return [self._error(ERR_MALFORMED, str(e))]

    def _on_hello(self, state: ClientState, msg: dict) -> list[dict]:
        role = _field(msg, "role", str, "HELLO")
        if role not in _ROLES:
            raise _Malformed(f"unknown role {role!r}")
        if state.role is not None:
            raise _Malformed("duplicate HELLO")
        state.role = role
        return [self._snapshot_msg()]

    def _on_action(self, state: ClientState, msg: dict) -> list[dict]:
        if state.role != ROLE_ACTOR:
            return [self._error(ERR_ROLE, "ACTION requires the actor role")]
        if self.config.mode != "sim":
            return [self._error(ERR_MODE, "ACTION is only valid in sim mode")]
        self._pending_actions.append((state, _parse_action(msg)))
        return []

    def _on_detections(self, state: ClientState, msg: dict) -> list[dict]:
        if state.role != ROLE_DETECTOR:
            return [self._error(ERR_ROLE, "DETECTIONS requires the detector role")]
        if self.config.mode != "external":
            return [self._error(ERR_MODE, "DETECTIONS is only valid in external mode")]
        frame = _field(msg, "frame", int, "DETECTIONS")
        self.core.submit_detections(frame, _parse_boxes(msg))
        return []

    def tick_once(self) -> list[tuple[Optional[ClientState], dict]]:
        """Advance one tick; returns (recipient, message) pairs in order.

        A None recipient means broadcast.  Queued actions apply first, in
        arrival order; an illegal one turns into an ERROR for its sender
        and the rest still apply.
        """
        out: list[tuple[Optional[ClientState], dict]] = []
        pending, self._pending_actions = self._pending_actions, []
        for state, action in pending:
            try:
                self.core.apply(action)
            except SceneError as e:
                out.append((state, self._error(ERR_ACTION, str(e))))
        result = self.core.tick()
        for e in result.events:
            out.append(
                (None, self._msg("EVENT", kind=e.kind, step_index=e.step_index, frame=e.frame))
            )
        hl = result.highlights
        if hl is not None:
            out.append(
                (
                    None,
                    self._msg(
                        "HIGHLIGHTS",
                        tick=result.tick,
                        label=hl.label,
                        source_box=None if hl.source_box is None else _box_json(hl.source_box),
                        target_box=_box_json(hl.target_box),
                        layer_geometry=[_box_json(b) for b in hl.layer_geometry],
                    ),
                )
            )
        if self.core.tick_index % SNAPSHOT_EVERY_TICKS == 0:
            out.append((None, self._snapshot_msg()))
        return out

    async def _deliver(self, routed: list[tuple[Optional[ClientState], dict]]) -> None:
        """Send routed messages; a dead connection just drops out."""
        for state, msg in routed:
            text = json.dumps(msg, sort_keys=True)
            targets = list(self.clients.values()) if state is None else [state]
            for target in targets:
                if target.connection is None:
                    continue
                try:
                    await target.connection.send(text)
                except ConnectionClosed:
                    self.clients.pop(target.connection, None)

    async def handle_client(self, connection) -> None:
        if connection.request.path != "/session":
            await connection.close(code=1008, reason="unknown path")
            return
        state = ClientState(connection)
        self.clients[connection] = state
        try:
            async for raw in connection:
                for reply in self.handle_message(state, raw):
                    await connection.send(json.dumps(reply, sort_keys=True))
        except ConnectionClosed:
            pass
        finally:
            self.clients.pop(connection, None)

    async def run_loop(self) -> None:
        interval = 1.0 / self.config.tick_hz
        while True:
            started = time.monotonic()
            await self._deliver(self.tick_once())
            elapsed = time.monotonic() - started
            await asyncio.sleep(max(0.0, interval - elapsed))


async def run_session(
    plan: AssemblyPlan, config: SessionConfig, port: int, host: str = "127.0.0.1"
) -> None:
    """Serve one session until cancelled; prints the bound address."""
    server = SessionServer(plan, config)
    async with serve(server.handle_client, host, port) as ws_server:
        bound_port = ws_server.sockets[0].getsockname()[1]
        print(f"serving ws://{host}:{bound_port}/session", flush=True)
        await server.run_loop()
