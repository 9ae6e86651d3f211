"""Command-line entry point.

Four subcommands cover the artifact's workflows: ``validate`` parses a
plan document and reports violations, ``compile`` emits the ordered step
list, ``simulate`` runs a scripted headless session, and ``serve``
exposes a live session over WebSocket.

Exit codes are fixed so CI can assert outcomes: 0 success, 1 validation
violations, 2 unusable input (missing file, parse error, bad script,
bind failure), 3 simulation finished without completing the assembly.
"""

from __future__ import annotations

import argparse
import dataclasses
import importlib.resources
import json
import sys
from pathlib import Path

from .plan import (
    AssemblyPlan,
    PlanError,
    compile_steps,
    parse_plan_structure,
    validate_plan,
)
from .scene import (
    NOISE_DEFAULT,
    NOISE_HEAVY,
    NOISE_ZERO,
    SceneError,
    parse_action_script,
)
from .session import (
    MODE_EXTERNAL,
    MODE_SIM,
    SessionConfig,
    SessionCore,
    run_script,
    transcript_line,
)

__all__ = ["main", "bundled_plan_path", "bundled_script_path"]

NOISE_PRESETS = {"zero": NOISE_ZERO, "default": NOISE_DEFAULT, "heavy": NOISE_HEAVY}


def bundled_plan_path(name: str) -> Path:
    """Filesystem path of a bundled demonstration plan ('egg', 'twist')."""
    return Path(str(importlib.resources.files("brickguide") / "plans" / f"{name}.plan"))


def bundled_script_path(name: str) -> Path:
    """Filesystem path of the perfect action script for a bundled plan."""
    return Path(str(importlib.resources.files("brickguide") / "plans" / f"{name}.script"))


def _fail(message: str) -> int:
    print(message, file=sys.stderr)
    return 2


def _read_plan(path: str) -> AssemblyPlan:
    """Parse a plan document's structure; PlanError/OSError propagate."""
    return parse_plan_structure(Path(path).read_text())


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        plan = _read_plan(args.plan)
    except (OSError, PlanError) as e:
        return _fail(f"validate: {e}")
    violations = validate_plan(plan)
    if args.json:
        print(
            json.dumps(
                {
                    "plan": plan.name,
                    "valid": not violations,
                    "violations": [
                        {"kind": v.kind, "first": v.first, "second": v.second}
                        for v in violations
                    ],
                }
            )
        )
    else:
        for v in violations:
            print(v.describe())
        if not violations:
            print(f"OK {plan.name}: {len(plan.placements)} placements")
    return 1 if violations else 0


def cmd_compile(args: argparse.Namespace) -> int:
    try:
        plan = _read_plan(args.plan)
    except (OSError, PlanError) as e:
        return _fail(f"compile: {e}")
    if validate_plan(plan):
        print("compile: plan has validation violations", file=sys.stderr)
        return 1
    steps = compile_steps(plan)
    if args.json:
        print(
            json.dumps(
                [
                    {
                        "step": s.index,
                        "type_id": s.placement.type_id,
                        "x": s.placement.cell_x,
                        "y": s.placement.cell_y,
                        "layer": s.placement.layer,
                        "rot": s.placement.rotation,
                    }
                    for s in steps
                ]
            )
        )
    else:
        for s in steps:
            p = s.placement
            print(f"STEP {s.index} {p.type_id} {p.cell_x} {p.cell_y} {p.layer} {p.rotation}")
    return 0


def _event_lines(events) -> list[str]:
    lines = []
    for e in events:
        step = "-" if e.step_index is None else str(e.step_index)
        lines.append(f"EVENT {e.kind} {step} {e.frame}")
    return lines


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        plan = _read_plan(args.plan)
        script = parse_action_script(Path(args.script).read_text())
    except (OSError, PlanError, SceneError) as e:
        return _fail(f"simulate: {e}")
    noise = dataclasses.replace(NOISE_PRESETS[args.noise], seed=args.seed)
    try:
        core = SessionCore(plan, SessionConfig(mode=MODE_SIM, noise=noise))
        result = run_script(core, script)
    except (PlanError, SceneError, ValueError) as e:
        return _fail(f"simulate: {e}")
    if args.emit_transcript:
        lines = [transcript_line(r) for r in result.results]
        Path(args.emit_transcript).write_text("\n".join(lines) + "\n")
    for line in _event_lines(result.events):
        print(line)
    return 0 if result.completed else 3


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        plan = _read_plan(args.plan)
        noise = dataclasses.replace(NOISE_PRESETS[args.noise], seed=args.seed)
        config = SessionConfig(mode=args.mode, tick_hz=args.tick_hz, noise=noise)
        SessionCore(plan, config)  # surface plan/config errors before binding
    except (OSError, PlanError, ValueError) as e:
        return _fail(f"serve: {e}")

    import asyncio

    from .server import run_session

    try:
        asyncio.run(run_session(plan, config, port=args.port))
    except OSError as e:
        return _fail(f"serve: {e}")
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brickguide",
        description="Brick-assembly guidance: validate and compile plans, "
        "simulate scripted sessions, serve live ones.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="check a plan document")
    p.add_argument("plan")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compile", help="emit the ordered step list")
    p.add_argument("plan")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="run a scripted headless session")
    p.add_argument("plan")
    p.add_argument("--script", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", choices=sorted(NOISE_PRESETS), default="zero")
    p.add_argument("--emit-transcript", metavar="PATH")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="serve a live session over WebSocket")
    p.add_argument("plan")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--mode", choices=[MODE_SIM, MODE_EXTERNAL], default=MODE_SIM)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", choices=sorted(NOISE_PRESETS), default="zero")
    p.add_argument("--tick-hz", type=int, default=15)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
