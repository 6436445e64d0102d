"""Command-line harness: train, eval, bench, export.

Exit codes: 0 ok; 2 config/argument error; 3 training collapse;
4 checkpoint/morphology mismatch; 5 corrupt checkpoint.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COLLAPSE = 3
EXIT_MORPHOLOGY = 4
EXIT_CORRUPT = 5


def _cmd_train(args) -> int:
    from .config import ConfigError, load_run_config
    from .trainer import TrainingCollapse, train_run

    try:
        cfg = load_run_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.iterations is not None:
        cfg.iterations = args.iterations
    try:
        summary = train_run(cfg, progress=not args.quiet)
    except TrainingCollapse as exc:
        print(
            f"training collapsed: {exc}\nemergency checkpoint: {exc.checkpoint}",
            file=sys.stderr,
        )
        return EXIT_COLLAPSE
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .evaluate import PROFILES, eval_checkpoint
    from .nn.checkpoint import CheckpointError
    from .robot import MorphologyError

    if args.episodes < 1:
        print(f"--episodes must be >= 1, got {args.episodes}", file=sys.stderr)
        return EXIT_CONFIG
    if args.profile not in PROFILES:
        print(f"unknown profile {args.profile!r}; choose from {PROFILES}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        report, manifest = eval_checkpoint(
            args.checkpoint,
            args.terrain,
            episodes=args.episodes,
            profile=args.profile,
            speed=args.speed,
            deterministic=args.deterministic,
            randomize=args.randomize,
            lock_wheels=args.lock_wheels,
            seed=args.seed,
            dump_path=args.dump,
        )
    except CheckpointError as exc:
        print(f"corrupt checkpoint: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except MorphologyError as exc:
        print(f"morphology mismatch: {exc}", file=sys.stderr)
        return EXIT_MORPHOLOGY
    except ValueError as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.morphology and manifest["morphology"] != args.morphology:
        print(
            f"morphology mismatch: checkpoint is {manifest['morphology']!r}, "
            f"requested {args.morphology!r}",
            file=sys.stderr,
        )
        return EXIT_MORPHOLOGY

    out_base = args.out or (args.checkpoint + f"_eval_{args.terrain}")
    report.to_json(out_base + ".json")
    report.to_csv(out_base + ".csv")
    print(json.dumps(report.aggregate(), indent=2))
    print(f"report: {out_base}.json / .csv")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .config import ConfigError, load_run_config
    from .env import WheelLegEnv
    from .robot import load_morphology
    from .terrain import generate_set

    try:
        cfg = load_run_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    morphology = load_morphology(cfg.morphology)
    tset = generate_set(cfg.seed, cfg.terrain.levels, cfg.terrain.variations,
                        cfg.terrain.length, cfg.terrain.cell_size,
                        tuple(cfg.terrain.kinds))
    rng = np.random.default_rng(cfg.seed)
    rows = []
    sizes = [1, cfg.n_envs] if cfg.n_envs > 1 else [1]
    for n in sizes:
        env = WheelLegEnv(morphology, tset, cfg.env, n_envs=n, seed=cfg.seed)
        env.sim.profile = True
        steps = 0
        t0 = time.perf_counter()
        while time.perf_counter() - t0 < args.seconds:
            actions = rng.normal(0.0, 0.5, (n, env.n_actions))
            env.step(actions)
            steps += 1
        wall = time.perf_counter() - t0
        timers = dict(env.sim.timers)
        sim_total = sum(timers.values())
        rows.append(
            {
                "envs": n,
                "control_steps": steps,
                "env_steps": steps * n,
                "env_steps_per_s": round(steps * n / wall, 1),
                "ms_per_control_step": round(wall / max(steps, 1) * 1e3, 3),
                "sim_breakdown_ms": {
                    k: round(v / max(steps, 1) * 1e3, 3) for k, v in timers.items()
                },
                "sim_fraction": round(sim_total / wall, 3),
            }
        )
    print(json.dumps({"seconds": args.seconds, "scaling": rows}, indent=2))
    return EXIT_OK


def _cmd_export(args) -> int:
    from .metrics import read_metrics
    from .terrain import named_terrain, to_csv

    if args.terrain:
        out = args.out or f"terrain_{args.terrain}.csv"
        try:
            hf = named_terrain(args.terrain)
        except ValueError as exc:
            print(f"argument error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        to_csv(hf, out)
        print(f"wrote {out}")
        return EXIT_OK

    if not args.metrics:
        print("export needs --metrics FILE (or --terrain NAME)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records, skipped = read_metrics(args.metrics)
    except OSError as exc:
        print(f"cannot read metrics: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if skipped:
        print(f"warning: {skipped} malformed line(s) skipped", file=sys.stderr)

    what = args.what
    out = args.out or f"{os.path.splitext(args.metrics)[0]}_{what}.csv"
    if what == "return":
        cols = [("iteration", lambda r: r.get("iteration")),
                ("mean_return", lambda r: r.get("mean_return"))]
    elif what == "terrain-level":
        cols = [("iteration", lambda r: r.get("iteration")),
                ("terrain_level_mean", lambda r: r.get("terrain_level_mean")),
                ("terrain_level_frac_gt3", lambda r: r.get("terrain_level_frac_gt3"))]
    elif what == "tracking":
        cols = [("iteration", lambda r: r.get("iteration")),
                ("mean_tracking", lambda r: r.get("mean_tracking"))]
    elif what == "reward-terms":
        term_names = sorted(records[0].get("reward_terms", {}).keys()) if records else []
        cols = [("iteration", lambda r: r.get("iteration"))] + [
            (t, lambda r, t=t: r.get("reward_terms", {}).get(t)) for t in term_names
        ]
    elif what == "losses":
        cols = [("iteration", lambda r: r.get("iteration")),
                ("policy_loss", lambda r: r.get("policy_loss")),
                ("value_loss", lambda r: r.get("value_loss")),
                ("entropy", lambda r: r.get("entropy")),
                ("aux_loss", lambda r: r.get("aux_loss")),
                ("approx_kl", lambda r: r.get("approx_kl")),
                ("lr", lambda r: r.get("lr"))]
    else:
        print(
            f"unknown series {what!r}; choose from return, terrain-level, "
            "tracking, reward-terms, losses",
            file=sys.stderr,
        )
        return EXIT_CONFIG

    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([c for c, _ in cols])
        for r in records:
            w.writerow([fn(r) for _, fn in cols])
    print(f"wrote {out} ({len(records)} rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wheelleg",
        description="Planar wheeled-legged locomotion: training and evaluation harness",
    )
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a seeded training loop")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None)
    t.add_argument("--iterations", type=int, default=None)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True,
                   help="checkpoint stem (without .json/.bin)")
    e.add_argument("--terrain", default="flat")
    e.add_argument("--profile", default="constant")
    e.add_argument("--episodes", type=int, default=20)
    e.add_argument("--speed", type=float, default=1.0)
    e.add_argument("--deterministic", action="store_true")
    e.add_argument("--randomize", action="store_true")
    e.add_argument("--lock-wheels", action="store_true")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--morphology", default=None)
    e.add_argument("--out", default=None)
    e.add_argument("--dump", default=None,
                   help="write per-step state records (JSON lines) for env 0")
    e.set_defaults(fn=_cmd_eval)

    b = sub.add_parser("bench", help="simulator throughput benchmark")
    b.add_argument("--config", required=True)
    b.add_argument("--seconds", type=float, default=5.0)
    b.set_defaults(fn=_cmd_bench)

    x = sub.add_parser("export", help="export metrics series or terrain CSV")
    x.add_argument("--metrics", default=None)
    x.add_argument("--what", default="return")
    x.add_argument("--terrain", default=None)
    x.add_argument("--out", default=None)
    x.set_defaults(fn=_cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
