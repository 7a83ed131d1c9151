"""``pregrasp`` command line: train, eval, sweep, disturb, viz-field, replay.

Exit codes: 0 success, 1 usage, 2 invalid configuration or input, 3 runtime
failure (including a failed replay check).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ParseError, RunConfig, ValidationError, config_hash, emit_config, parse_config
from .env import PregraspEnv
from .evaluation import (
    SWEEP_HEADER,
    DisturbanceSpec,
    NoLiftAchieved,
    SweepSpec,
    disturbance_momentum,
    disturbance_trial,
    draw_scenario,
    evaluate_policy,
    momentum_budget,
    run_sweep,
)
from .fieldviz import SpecOutsideWorkspace, VectorFieldSpec, export_vector_field, front_face_points
from .persist import atomic_write_text, provenance_header
from .sac import policy_mean
from .traces import dump_episode, replay_trace

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
log = logging.getLogger("pregrasp")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pregrasp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, checkpoint_required=True):
        sp.add_argument("--config", help="run configuration file (defaults when omitted)")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        if checkpoint_required is not None:
            sp.add_argument("--checkpoint", required=checkpoint_required)
        sp.add_argument("--out", help="output path")

    common(sub.add_parser("train", help="train a policy"), None)
    sp = sub.add_parser("eval", help="evaluate a checkpoint on randomized episodes")
    common(sp)
    sp.add_argument("--episodes", type=int, default=50)
    sp.add_argument("--dump-traces", metavar="DIR", help="write one trace file per episode")
    sp = sub.add_parser("sweep", help="success rate over one scenario parameter")
    common(sp)
    sp.add_argument("--axis", required=True,
                    choices=["width", "height", "mass", "friction", "initial_y", "support_inclination"])
    sp.add_argument("--grid", type=_floats, required=True)
    sp.add_argument("--episodes", type=int, default=10, help="episodes per grid point")
    sp = sub.add_parser("disturb", help="knock the lifted box with angular impulses")
    common(sp)
    sp.add_argument("--momentum-grid", type=_floats)
    sp.add_argument("--episodes", type=int, default=10, help="trials per momentum")
    sp = sub.add_parser("viz-field", help="export the mean-action vector field")
    common(sp)
    sp.add_argument("--svg", help="also write an SVG rendering")
    sp.add_argument("--grid", type=_floats, help="ny,nz grid counts")
    sp.add_argument("--pitch", type=float, default=-2.75, help="fixed effector pitch")
    sp = sub.add_parser("replay", help="re-simulate a dumped trace and compare bitwise")
    sp.add_argument("trace", nargs="+")
    sp.add_argument("--config")
    return p


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
    return cfg


def _policy(path: str):
    agent, meta = checkpoint.load_agent(path)
    actor = agent.actor
    return (lambda o: policy_mean(actor, o)), meta


def cmd_train(args) -> int:
    from .training import train

    cfg = _load_config(args)
    out = Path(args.out or cfg.run.out_dir)
    h = config_hash(cfg)
    atomic_write_text(out / "config.ini", provenance_header(h, cfg.seed) + emit_config(cfg))
    env_cfg = cfg.env_config()
    res = train(cfg.sac, lambda: PregraspEnv(env_cfg), cfg.seed, out, cfg.table, cfg.train_settings(), h)
    last = res.records[-1] if res.records else {}
    print(f"metrics: {res.metrics_path}")
    print(f"best checkpoint: {res.best_checkpoint}")
    if last:
        print(f"final eval success rate: {last['eval_success_rate']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    policy, _ = _policy(args.checkpoint)
    env_cfg = cfg.env_config()
    rng = np.random.default_rng(cfg.seed)
    h = config_hash(cfg)
    if args.dump_traces:
        results = []
        for i in range(args.episodes):
            sc = draw_scenario(cfg.table, rng, env_cfg)
            path = Path(args.dump_traces) / f"episode_{i:03d}.jsonl"
            results.append(dump_episode(policy, sc, path, env_cfg, h, cfg.seed))
        from .evaluation import summarize
        summary = summarize(results)
    else:
        summary = evaluate_policy(policy, args.episodes, rng, cfg.table, env_cfg)
    print(f"episodes: {summary.episodes}")
    print(f"success rate: {summary.success_rate:.3f}")
    print(f"mean max pitch: {summary.mean_max_pitch:.4f} rad (std {summary.std_max_pitch:.4f})")
    if args.out:
        rows = [{"episode": i, "max_pitch": r.max_pitch, "success": r.success,
                 "termination_reason": r.termination_reason.value, "steps_used": r.steps_used,
                 "final_d": r.final_d} for i, r in enumerate(summary.results)]
        body = {"success_rate": summary.success_rate, "mean_max_pitch": summary.mean_max_pitch,
                "std_max_pitch": summary.std_max_pitch, "episodes": rows}
        atomic_write_text(args.out, provenance_header(h, cfg.seed) + json.dumps(body, indent=1) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    policy, _ = _policy(args.checkpoint)
    spec = SweepSpec(args.axis, tuple(args.grid), args.episodes, cfg.seed)
    rows = run_sweep(policy, spec, cfg.env_config())
    buf = io.StringIO()
    buf.write(provenance_header(config_hash(cfg), cfg.seed))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow((r.axis, repr(r.value), r.episodes, repr(r.success_rate), repr(r.mean_max_pitch),
                    repr(r.std_max_pitch)))
    text = buf.getvalue()
    if args.out:
        atomic_write_text(args.out, text)
    print(text, end="")
    return EXIT_OK


def cmd_disturb(args) -> int:
    cfg = _load_config(args)
    policy, _ = _policy(args.checkpoint)
    env_cfg = cfg.env_config()
    budget = momentum_budget(env_cfg.scene.box)
    grid = sorted(args.momentum_grid or [0.0, 0.25 * budget, 0.5 * budget, 0.75 * budget, budget])
    rng = np.random.default_rng(cfg.seed)
    table = cfg.table.with_probabilities(0.0, 0.0)
    table = replace(table, rows={k: (cfg.table.rows[k] if k.startswith("eff_") else r)
                                 for k, r in table.rows.items()})
    scenarios = [draw_scenario(table, rng, env_cfg) for _ in range(args.episodes)]
    lines = ["momentum,trials,withstood,no_lift"]
    best = None
    for m in grid:
        ok = nolift = 0
        for sc in scenarios:
            try:
                ok += disturbance_trial(policy, sc, m, env_cfg).withstood
            except NoLiftAchieved:
                nolift += 1
        lines.append(f"{m!r},{len(scenarios)},{ok},{nolift}")
        if ok >= 0.8 * len(scenarios):
            best = m
    real = disturbance_momentum(DisturbanceSpec(0.056))
    text = provenance_header(config_hash(cfg), cfg.seed) + "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    print(text, end="")
    print(f"scaled budget for this box: {budget:.5f} kg m^2/s")
    print(f"max momentum withstood in >= 80% of trials: {best}")
    print(f"real-world reference (two cups): {real:.4f} kg m^2/s")
    return EXIT_OK


def cmd_viz_field(args) -> int:
    cfg = _load_config(args)
    policy, _ = _policy(args.checkpoint)
    box = cfg.env_config().scene.box
    spec = VectorFieldSpec(fixed_pitch=args.pitch, box_geometry=box, box_pose=(0.21, box.height / 2, 0.0))
    if args.grid:
        if len(args.grid) != 2:
            raise ValidationError("--grid expects ny,nz")
        spec = replace(spec, counts=(int(args.grid[0]), int(args.grid[1])))
    out = args.out or "vector_field.csv"
    records = export_vector_field(policy, spec, out, args.svg, config_hash(cfg), cfg.seed)
    near = front_face_points(records, spec)
    toward = sum(r.dy > 0 for r in near)
    print(f"wrote {len(records)} records to {out}")
    if near:
        print(f"points left of the front face at box height: {len(near)}, "
              f"pointing toward the box: {toward / len(near):.3f}")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = parse_config(args.config) if args.config else RunConfig()
    failed = 0
    for path in args.trace:
        rep = replay_trace(path, cfg.env_config())
        print(f"{path}: {'ok' if rep.ok else 'MISMATCH'} ({rep.message})")
        failed += not rep.ok
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "disturb": cmd_disturb,
    "viz-field": cmd_viz_field, "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ValidationError, SpecOutsideWorkspace, checkpoint.CheckpointVersionMismatch,
            checkpoint.CorruptCheckpoint, FileNotFoundError) as exc:
        print(f"pregrasp {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"pregrasp {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"pregrasp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
