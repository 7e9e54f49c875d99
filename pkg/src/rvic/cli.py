"""Command-line driver.

Subcommands::

    rvic train-skills CONFIG [--set k=v] [--baseline-mode vic] [--resume] [--stop-after N]
    rvic eval-skills CHECKPOINT [--config CONFIG] [--output-dir DIR]
    rvic train-hrl (CHECKPOINT | none) [--config CONFIG] [--meta-action-cost C] [--skill-exec-length L]
    rvic sweep GRID [--jobs N]
    rvic dump-layout [--kind four_rooms]
    rvic defaults

Exit codes: 0 success, 2 usage or configuration error, 3 runtime contract violation.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import (ExperimentConfig, apply_override, default_document, dump_config, load_document)
from .env import FOUR_ROOMS, KINDS, EnvConfig, make_env
from .errors import CheckpointError, ConfigError, ContractViolation, InapplicableMetric
from .hrl import MetaConfig, episodes_to_threshold, train_hrl
from .metrics import RolloutSet, compute_report, emit_csv
from .trainer import Trainer, config_hash

log = logging.getLogger("rvic")

EXIT_OK, EXIT_USAGE, EXIT_CONTRACT = 0, 2, 3
CURVE_COLUMNS = ("arm", "seed", "episodes", "return_mean", "decisions_mean")
SUMMARY_COLUMNS = ("arm", "cell", "overrides", "final_return", "median_episodes_to_threshold", "best")
PROVENANCE = ("config_hash", "artifact_version")
PRIMITIVE_ARM = "primitive"


# -- helpers -----------------------------------------------------------------

def _resolve(args) -> tuple[ExperimentConfig, dict]:
    doc = load_document(args.config) if getattr(args, "config", None) else {}
    for assignment in getattr(args, "overrides", None) or ():
        apply_override(doc, assignment)
    extra = {
        "train.skills.baseline_mode": getattr(args, "baseline_mode", None),
        "train.seed": getattr(args, "seed", None),
        "meta.meta_action_cost": getattr(args, "meta_action_cost", None),
        "meta.skill_exec_length": getattr(args, "skill_exec_length", None),
    }
    if getattr(args, "seed", None) is not None:
        extra["meta.seed"] = args.seed
    for key, value in extra.items():
        if value is not None:
            apply_override(doc, f"{key}={json.dumps(value)}")
    if getattr(args, "output_dir", None):
        doc["output_dir"] = args.output_dir
    return ExperimentConfig.from_dict(doc), doc


def _explicit_env(doc: dict) -> bool:
    return isinstance(doc.get("train"), dict) and "env" in doc["train"]


def _write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _hrl_hash(meta: MetaConfig, env: EnvConfig, skills_hash: str | None) -> str:
    return config_hash({"meta": meta.to_dict(), "env": env.to_dict(), "skills": skills_hash})


# -- subcommands -------------------------------------------------------------

def cmd_train_skills(args) -> int:
    config, _ = _resolve(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.json"
    if args.resume:
        if not ckpt.exists():
            raise ConfigError(f"--resume given but {ckpt} does not exist")
        trainer = Trainer.load(ckpt, expected=config.train)
    else:
        trainer = Trainer(config.train)
    sink = None
    episodes_fh = None
    if args.episodes:
        episodes_fh = open(out / "episodes.jsonl", "a" if args.resume else "w", encoding="utf-8")
        sink = lambda ep: episodes_fh.write(ep.to_json() + "\n")  # noqa: E731
    try:
        trainer.run(until=args.stop_after, episode_sink=sink)
    finally:
        if episodes_fh is not None:
            episodes_fh.close()
    dump_config(config, out / "config.yaml")
    trainer.save(ckpt)
    metrics = out / "metrics.csv"
    metrics.unlink(missing_ok=True)
    emit_csv(trainer.log, metrics, config_hash=config.train.hash())
    print(f"trained to episode {trainer.episode}; checkpoint {ckpt}")
    return EXIT_OK


def cmd_eval_skills(args) -> int:
    trainer = Trainer.load(args.checkpoint)
    train = trainer.config
    if args.config:
        config, doc = _resolve(args)
        if _explicit_env(doc) and config.train.env != train.env:
            raise ConfigError(f"environment {config.train.env.to_dict()} does not match the checkpoint's "
                              f"{train.env.to_dict()}")
    out = Path(args.output_dir or Path(args.checkpoint).parent / "eval")
    out.mkdir(parents=True, exist_ok=True)
    env = trainer.env
    ends = trainer.skill_maps()
    K, S = ends.shape
    chash = train.hash()
    entries = [{"skill": k, "start": s, "end": int(ends[k, s]),
                "start_coords": list(env.state_coords(s)), "end_coords": list(env.state_coords(int(ends[k, s])))}
               for k in range(K) for s in range(S)]
    doc = {"config_hash": chash, "seed": train.seed, "artifact_version": __version__,
           "env": train.env.to_dict(), "episode": trainer.episode, "num_skills": K, "num_states": S,
           "episode_length": train.skills.episode_length, "entries": entries}
    (out / "skill_map.json").write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    report = compute_report(RolloutSet.from_skill_maps(ends), env, episode=trainer.episode,
                            arm=train.skills.baseline_mode, seed=train.seed)
    metrics = out / "metrics.csv"
    metrics.unlink(missing_ok=True)
    emit_csv([report], metrics, config_hash=chash)
    print(f"evaluated {K} skills x {S} starts into {out}")
    return EXIT_OK


def _run_hrl_arm(meta: MetaConfig, env_cfg: EnvConfig, checkpoint: str | None):
    if checkpoint is None:
        _, curve = train_hrl(meta, None, env_cfg, PRIMITIVE_ARM)
        return curve, _hrl_hash(meta, env_cfg, None)
    trainer = Trainer.load(checkpoint)
    sk = trainer.config.skills
    _, curve = train_hrl(meta, trainer.policy.q_values, trainer.config.env, sk.baseline_mode, sk.episode_length)
    return curve, _hrl_hash(meta, trainer.config.env, trainer.config.hash())


def cmd_train_hrl(args) -> int:
    config, doc = _resolve(args)
    checkpoint = None if args.skills == "none" else args.skills
    env_cfg = config.train.env
    if checkpoint is not None:
        ck_env = Trainer.load(checkpoint).config.env
        if _explicit_env(doc) and ck_env != env_cfg:
            raise ConfigError(f"environment {env_cfg.to_dict()} does not match the checkpoint's {ck_env.to_dict()}")
    curve, chash = _run_hrl_arm(config.meta, env_cfg, checkpoint)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "curve.csv", CURVE_COLUMNS + PROVENANCE,
                [[_fmt(v) for v in row] + [chash, __version__] for row in curve])
    final = curve[-1].return_mean if curve else float("nan")
    print(f"arm {curve[0].arm if curve else '?'}: final return {final:.3f}; curve {out / 'curve.csv'}")
    return EXIT_OK


# -- sweep -------------------------------------------------------------------

def _load_grid(path) -> dict:
    grid_doc = load_document(path)
    allowed = {"base", "config", "output_dir", "seeds", "arms", "grid"}
    unknown = set(grid_doc) - allowed
    if unknown:
        raise ConfigError(f"unknown grid key(s): {sorted(unknown)}")
    base = dict(grid_doc.get("config") or {})
    if grid_doc.get("base"):
        base_path = Path(path).parent / grid_doc["base"]
        base = {**load_document(base_path), **base}
    grid = grid_doc.get("grid") or {}
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        raise ConfigError("'grid' must map dotted keys to nonempty lists")
    arms = grid_doc.get("arms", [PRIMITIVE_ARM, "rvic", "vic"])
    for arm in arms:
        if arm not in (PRIMITIVE_ARM, "rvic", "vic"):
            raise ConfigError(f"unknown arm '{arm}'")
    seeds = grid_doc.get("seeds", [0, 1, 2])
    if "output_dir" not in grid_doc:
        raise ConfigError("grid file needs an 'output_dir'")
    return {"base": base, "grid": grid, "arms": list(arms), "seeds": [int(s) for s in seeds],
            "output_dir": Path(grid_doc["output_dir"])}


def _cells(grid: dict) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def _cell_config(base: dict, overrides: dict, seed: int, arm: str) -> ExperimentConfig:
    doc = json.loads(json.dumps(base))
    for key, value in overrides.items():
        apply_override(doc, f"{key}={json.dumps(value)}")
    apply_override(doc, f"train.seed={seed}")
    apply_override(doc, f"meta.seed={seed}")
    if arm != PRIMITIVE_ARM:
        apply_override(doc, f"train.skills.baseline_mode={arm}")
    return ExperimentConfig.from_dict(doc)


def _skills_checkpoint(train, cache_dir: Path) -> Path:
    path = cache_dir / f"{train.hash()}.json"
    if not path.exists():
        trainer = Trainer(train)
        trainer.run()
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        trainer.save(tmp)
        os.replace(tmp, path)
    return path


def _run_cell(job) -> list[list]:
    index, overrides, base, arms, seeds, out = job
    cell_dir = out / f"cell-{index:03d}"
    cell_dir.mkdir(parents=True)
    rows = []
    for arm in arms:
        for seed in seeds:
            cfg = _cell_config(base, overrides, seed, arm)
            ckpt = None if arm == PRIMITIVE_ARM else str(_skills_checkpoint(cfg.train, out / "skills"))
            curve, chash = _run_hrl_arm(cfg.meta, cfg.train.env, ckpt)
            rows.extend([_fmt(v) for v in row] + [chash, __version__] for row in curve)
    (cell_dir / "overrides.json").write_text(json.dumps(overrides, sort_keys=True), encoding="utf-8")
    _write_rows(cell_dir / "curve.csv", CURVE_COLUMNS + PROVENANCE, rows)
    return rows


def summarize(cell_rows: list[list[list]], cells: list[dict], arms, sweep_hash: str) -> list[list]:
    """Per (arm, cell): mean final return over seeds; the first argmax cell per arm is marked best."""
    table = []
    for arm in arms:
        scored = []
        for index, rows in enumerate(cell_rows):
            per_seed: dict[int, list] = {}
            for r in rows:
                if r[0] == arm:
                    per_seed.setdefault(int(r[1]), []).append(r)
            finals = [float(rs[-1][3]) for rs in per_seed.values()]
            ett = [episodes_to_threshold([_CurvePoint(int(x[2]), float(x[3])) for x in rs])
                   for rs in per_seed.values()]
            scored.append((index, float(np.mean(finals)), float(np.median(ett))))
        best = max(scored, key=lambda t: (t[1], -t[0]))[0]
        for index, final, ett in scored:
            table.append([arm, f"cell-{index:03d}", json.dumps(cells[index], sort_keys=True),
                          repr(final), repr(ett), int(index == best), sweep_hash, __version__])
    return table


class _CurvePoint:
    __slots__ = ("episodes", "return_mean")

    def __init__(self, episodes, return_mean):
        self.episodes, self.return_mean = episodes, return_mean


def cmd_sweep(args) -> int:
    grid_doc = _load_grid(args.grid)
    out = grid_doc["output_dir"]
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} already exists and is not empty; refusing to overwrite")
    grid_path = Path(args.grid).resolve()
    if out.resolve() in grid_path.parents:
        raise ConfigError(f"output directory {out} contains the grid file; refusing")
    cells = _cells(grid_doc["grid"])
    for overrides in cells:  # validate every cell before running anything
        _cell_config(grid_doc["base"], overrides, grid_doc["seeds"][0], grid_doc["arms"][0])
    out.mkdir(parents=True, exist_ok=True)
    (out / "skills").mkdir()
    jobs = [(i, c, grid_doc["base"], grid_doc["arms"], grid_doc["seeds"], out) for i, c in enumerate(cells)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            cell_rows = list(pool.map(_run_cell, jobs))
    else:
        cell_rows = [_run_cell(j) for j in jobs]
    sweep_hash = config_hash({"base": grid_doc["base"], "grid": grid_doc["grid"], "arms": grid_doc["arms"],
                              "seeds": grid_doc["seeds"]})
    _write_rows(out / "summary.csv", SUMMARY_COLUMNS + PROVENANCE,
                summarize(cell_rows, cells, grid_doc["arms"], sweep_hash))
    print(f"{len(cells)} cells written to {out}")
    return EXIT_OK


def cmd_dump_layout(args) -> int:
    size = {"width": 13, "height": 13} if args.kind == FOUR_ROOMS else {}
    print(make_env(EnvConfig(kind=args.kind, **size)).ascii_layout())
    return EXIT_OK


def cmd_defaults(args) -> int:
    sys.stdout.write(yaml.safe_dump(default_document(), sort_keys=False))
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rvic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        if config_required:
            p.add_argument("config")
        else:
            p.add_argument("--config")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value by dotted path, e.g. train.skills.num_skills=8")
        p.add_argument("--output-dir")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train-skills", help="discover skills and write a checkpoint + metrics CSV")
    common(p, config_required=True)
    p.add_argument("--baseline-mode", choices=("rvic", "vic"))
    p.add_argument("--resume", action="store_true", help="continue from OUTPUT_DIR/checkpoint.json")
    p.add_argument("--stop-after", type=int, help="stop at this episode (checkpoint can be resumed)")
    p.add_argument("--episodes", action="store_true", help="also write every episode to episodes.jsonl")
    p.set_defaults(func=cmd_train_skills)

    p = sub.add_parser("eval-skills", help="greedy skill maps and metrics for a checkpoint")
    p.add_argument("checkpoint")
    common(p)
    p.set_defaults(func=cmd_eval_skills)

    p = sub.add_parser("train-hrl", help="train a meta-controller on frozen skills (or 'none')")
    p.add_argument("skills", help="skill checkpoint path, or 'none' for primitives only")
    common(p)
    p.add_argument("--meta-action-cost", type=float)
    p.add_argument("--skill-exec-length", type=int)
    p.set_defaults(func=cmd_train_hrl)

    p = sub.add_parser("sweep", help="run a grid of HRL experiments and select the best cell per arm")
    p.add_argument("grid")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-layout", help="print an environment layout as ASCII")
    p.add_argument("--kind", choices=KINDS, default=FOUR_ROOMS)
    p.set_defaults(func=cmd_dump_layout)

    p = sub.add_parser("defaults", help="print the default experiment config")
    p.set_defaults(func=cmd_defaults)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, InapplicableMetric) as exc:
        print(f"rvic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractViolation as exc:
        print(f"rvic: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
