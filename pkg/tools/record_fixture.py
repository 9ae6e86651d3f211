"""Record a served session's broadcast stream for the workbench tests.

Drives the session server directly (no sockets) with a bundled plan and
its perfect script at zero noise, and writes every broadcast message as
NDJSON.  The workbench test suite replays this stream through its view
model and renderer, so the fixtures must be regenerated whenever the
wire protocol or the bundled plans change:

    PYTHONPATH=src python3 tools/record_fixture.py
"""

import json
from pathlib import Path

from brickguide.cli import bundled_plan_path, bundled_script_path
from brickguide.plan import parse_plan
from brickguide.scene import Pick, Place, Remove, Tick, parse_action_script
from brickguide.server import ClientState, SessionServer
from brickguide.session import SessionConfig

OUT = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def record(name: str) -> None:
    plan = parse_plan(bundled_plan_path(name).read_text())
    commands = parse_action_script(bundled_script_path(name).read_text())
    server = SessionServer(plan, SessionConfig())
    actor = ClientState()
    hello = server.handle_message(
        actor, json.dumps({"v": 1, "sid": "", "type": "HELLO", "role": "actor"})
    )
    lines = [json.dumps(m, sort_keys=True) for m in hello]
    for cmd in commands:
        if isinstance(cmd, Tick):
            for _ in range(cmd.frames):
                for target, msg in server.tick_once():
                    if target is None:
                        lines.append(json.dumps(msg, sort_keys=True))
        else:
            fields = {"action": {Pick: "pick", Place: "place", Remove: "remove"}[type(cmd)]}
            fields["id"] = cmd.instance_id
            if isinstance(cmd, Place):
                fields.update(
                    x=cmd.cell_x, y=cmd.cell_y, layer=cmd.layer, rot=cmd.rotation
                )
            raw = json.dumps({"v": 1, "sid": server.sid, "type": "ACTION", **fields})
            replies = server.handle_message(actor, raw)
            assert replies == [], replies
    assert server.core.done
    out = OUT / f"{name}_session.ndjson"
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out} ({len(lines)} messages)")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    record("egg")


if __name__ == "__main__":
    main()
