"""Command-line entry point: ``psodr synth | masks | bsub | experiment``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 missing
dependency (e.g. a mask cache that has not been built yet).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

from .core import RecordFormatError, load_record, save_record, validate_record
from .experiments import (CONDITIONS, ExperimentConfig, SubjectPool, compute_bsub_table, mask_search,
                          parse_conditions, parse_fractions, run_sweep)
from .masks import save_masks
from .preprocess import SynthConfig, synth_subject
from .transfer import build_meta_mask

log = logging.getLogger("psodr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_MISSING = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def read_config(path):
    """Parse a JSON config; syntax errors are reported with their line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise CliError(EXIT_CONFIG, f"{path}:1: top level must be an object")
    version = str(cfg.get("format_version", "1"))
    if version != "1":
        raise CliError(EXIT_CONFIG, f"{path}: unsupported config format_version {version!r}")
    return cfg


def _synth_configs(raw, seed):
    synth_fields = {f.name for f in fields(SynthConfig)}
    defaults = raw.get("defaults", {})
    subjects = raw.get("subjects")
    if not isinstance(subjects, list) or not subjects:
        raise CliError(EXIT_CONFIG, "synth config needs a nonempty 'subjects' list")
    out = []
    for i, entry in enumerate(subjects):
        merged = {**defaults, **entry}
        unknown = sorted(set(merged) - synth_fields)
        if unknown:
            raise CliError(EXIT_CONFIG, f"subject {i}: unknown keys {unknown}")
        merged.setdefault("subject_id", f"S{i + 1:02d}")
        merged.setdefault("seed", seed * 1000 + i)
        for key in ("informative_channels", "informative_bins"):
            if key in merged:
                merged[key] = tuple(merged[key])
        try:
            cfg = SynthConfig(**merged)
            cfg.check()
        except (TypeError, ValueError) as exc:
            raise CliError(EXIT_CONFIG, f"subject {i} ({merged['subject_id']}): {exc}") from exc
        out.append(cfg)
    return out


def cmd_synth(args):
    raw = read_config(args.config)
    out = Path(args.out)
    for cfg in _synth_configs(raw, args.seed):
        record = synth_subject(cfg)
        path = save_record(record, out / f"{cfg.subject_id}.json")
        print(path)
    return EXIT_OK


def experiment_config(args):
    raw = read_config(args.config) if getattr(args, "config", None) else {}
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"{args.config}: {exc}") from exc
    if args.seed is not None:
        cfg = replace(cfg, cv=replace(cfg.cv, seed=args.seed), mask_cv=replace(cfg.mask_cv, seed=args.seed),
                      swarm=replace(cfg.swarm, seed=args.seed), train=replace(cfg.train, seed=args.seed))
    return replace(cfg, n_jobs=args.jobs)


def load_roster(data_dir):
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise CliError(EXIT_DATA, f"data directory {data_dir} does not exist")
    records = []
    for manifest in sorted(data_dir.glob("*.json")):
        try:
            rec = load_record(manifest)
        except (RecordFormatError, FileNotFoundError, KeyError) as exc:
            raise CliError(EXIT_DATA, str(exc)) from exc
        problems = validate_record(rec)
        if problems:
            raise CliError(EXIT_DATA, f"{manifest}: {'; '.join(problems)}")
        records.append(rec)
    if not records:
        raise CliError(EXIT_DATA, f"no subject manifests in {data_dir}")
    return records


def _subjects(text, pool):
    ids = [s.strip() for s in text.split(",") if s.strip()]
    missing = [s for s in ids if s not in pool.records]
    if not ids or missing:
        raise CliError(EXIT_DATA, f"unknown subject ids {missing or text!r}; available: {', '.join(pool.roster)}")
    return ids


def cmd_masks(args):
    cfg = experiment_config(args)
    pool = SubjectPool(load_roster(args.data_dir), cfg, masks_dir=args.out)
    ids = _subjects(args.subjects, pool)
    written = []
    per_subject = []
    for sid in ids:
        if args.group_mode == "none":
            members = [sid]
            features = pool.features(sid)
        else:
            try:
                members = pool.group(sid, args.group_mode)
            except KeyError as exc:
                raise CliError(EXIT_CONFIG, f"{exc.args[0]} (set bsub_table in --config)") from exc
            features = pool.super_features(members)
        log.info("mask search for %s (%s): members %s", sid, args.group_mode, members)
        try:
            scored, best, common = mask_search(features, cfg)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, f"mask search for {sid}: {exc}") from exc
        per_subject.append((sid, scored))
        path = save_masks(pool.mask_path(sid, args.group_mode), scored, best, common,
                          target=sid, group_mode=args.group_mode, members=members)
        written.append(path)
        print(path)
    if args.meta and len(ids) > 1:
        f = pool.features(ids[0])
        meta = build_meta_mask(per_subject, cfg.swarm.n, cfg.swarm.k, f.n_channels, f.K)
        path = Path(args.out) / f"metamask_{'+'.join(ids)}.json"
        path.write_text(json.dumps({"format_version": "1", "members": ids, "meta_mask": meta.to_dict()}, indent=1),
                        encoding="utf-8")
        print(path)
    return EXIT_OK


def cmd_bsub(args):
    cfg = experiment_config(args)
    pool = SubjectPool(load_roster(args.data_dir), cfg)
    table = compute_bsub_table(pool, cfg)
    text = json.dumps({"bsub_table": {k: list(v) for k, v in table.items()}}, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(args.out)
    else:
        print(text)
    return EXIT_OK


def cmd_experiment(args):
    cfg = experiment_config(args)
    try:
        conditions = parse_conditions(args.conditions)
        fractions = parse_fractions(args.fractions)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    pool = SubjectPool(load_roster(args.data_dir), cfg, masks_dir=args.masks_dir)
    target = _subjects(args.target, pool)
    if len(target) != 1:
        raise CliError(EXIT_CONFIG, "--target takes exactly one subject id")
    target = target[0]
    for cid in conditions:
        cond = CONDITIONS[cid]
        for mode in {cond.group_mode, cond.dr_mask_source} - {"none"}:
            try:
                pool.group(target, mode)
            except KeyError as exc:
                raise CliError(EXIT_CONFIG, f"condition {cid}: {exc.args[0]} (set bsub_table in --config, "
                                            f"or compute one with 'psodr bsub')") from exc
        if cond.uses_dr:
            try:
                pool.dr_mask(target, cond.dr_mask_source, compute=False)
            except FileNotFoundError as exc:
                hint = (f"psodr masks --data-dir {args.data_dir} --subjects {target} "
                        f"--group-mode {cond.dr_mask_source} --out {args.masks_dir or '<masks-dir>'}")
                if args.config:
                    hint += f" --config {args.config}"
                raise CliError(EXIT_MISSING, f"condition {cid} needs the cached mask {exc.args[0]}; build it with:\n"
                                             f"  {hint}") from exc
    report = run_sweep(pool, target, conditions, fractions, cfg)
    for path in report.write(args.out, figures=not args.no_figures):
        print(path)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="psodr", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config seeds)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic subject records")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("masks", help="run the swarm mask search and distil BestMask/ComMask")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--subjects", required=True, help="comma-separated subject ids (targets for 4sub/Bsub)")
    s.add_argument("--group-mode", choices=("none", "4sub", "Bsub"), default="none")
    s.add_argument("--meta", action="store_true", help="also pool per-subject masks into a Meta Mask")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="output directory for mask files")
    s.set_defaults(func=cmd_masks)

    s = sub.add_parser("bsub", help="find the best Super Subject per target by exhaustive search")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_bsub)

    s = sub.add_parser("experiment", help="training-fraction sweep for one target subject")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--conditions", default="all", help="comma-separated ids such as 1.1a,2.1a, or 'all'")
    s.add_argument("--fractions", default="all", help="comma-separated fractions on the 0.05 grid, or 'all'")
    s.add_argument("--masks-dir")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--no-figures", action="store_true", help="skip rendering PNG figures")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.seed is None and args.command == "synth":
        args.seed = 0
    args.jobs = max(1, args.jobs)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"psodr: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
