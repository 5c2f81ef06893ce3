"""Command-line entry point: train, eval, compare, gridsearch, levels, synth-gen.

Experiments are described by an INI file with sections ``data``,
``backbone``, ``heads``, ``weights``, ``train`` and ``experiment``; any key
can be overridden with ``--set section.key=value``.  Results land in
``<outdir>/<config-hash>/`` next to a ``manifest.json`` that echoes the
effective configuration.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .backbone import BackboneConfig, ConfigError
from .checkpoint import load_checkpoint, save_checkpoint
from .container import ContainerError
from .data import (
    DEFAULT_COMPATIBILITY,
    DataError,
    DatasetSplit,
    SyntheticSpec,
    generate_synthetic,
    ingest_directory,
    load_dataset,
    save_dataset,
)
from .heads import HEADS, LEVELS, HeadConfig, write_records_csv, write_records_json
from .losses import LossWeights
from .metrics import (
    TASKS,
    aggregate,
    chance_level,
    task_reports,
    write_reports_csv,
    write_reports_json,
)
from .models import APPROACHES, MoDsCC
from .tensor import NonFiniteError
from .trainer import TrainConfig, grid_search, weight_grid, write_grid_csv

log = logging.getLogger("modscc")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "data": {
        "source": "synthetic",  # synthetic | directory | container
        "path": "",
        "image_size": "32,32",
        "split_seed": "0",
        "n_plants": "4",
        "n_diseases": "6",
        "compatibility": "default",
        "samples_per_pair": "30",
        "noise_level": "0.2",
    },
    "backbone": {
        "profile": "desk",  # desk | full
        "conv_blocks": "1x16,1x32,1x64",
        "dense_width": "32",
        "activation_slope": "0.01",
        "bn_momentum": "0.9",
        "bn_eps": "1e-5",
    },
    "heads": {
        "task_dense_width": "32",
        "chain_input": "probabilities",
        "aux_attach": "gap",
        "final_features": "gap",
        "shared_dense": "true",
    },
    "weights": {
        "balance": "",  # empty: the approach's own weights
    },
    "train": {
        "learning_rate": "0.001",
        "batch_size": "16",
        "patience": "50",
        "max_epochs": "10000",
        "eval_batch_size": "64",
    },
    "experiment": {
        "approach": "mo_dscc",
        "runs": "1",
        "seed": "0",
        "label": "",
    },
}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    raw: dict  # section -> key -> string, fully populated with defaults

    def get(self, section: str, key: str) -> str:
        return self.raw[section][key]

    def _typed(self, section, key, conv):
        text = self.get(section, key)
        try:
            return conv(text)
        except ValueError:
            raise ConfigError(f"[{section}] {key} = {text!r} is not a valid {conv.__name__}") from None

    def int(self, section, key) -> int:
        return self._typed(section, key, int)

    def float(self, section, key) -> float:
        return self._typed(section, key, float)

    def bool(self, section, key) -> bool:
        text = self.get(section, key).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key} = {text!r} is not a boolean")

    @property
    def approach(self) -> str:
        a = self.get("experiment", "approach")
        if a not in APPROACHES:
            raise ConfigError(f"unknown approach {a!r}; choose from {', '.join(APPROACHES)}")
        return a

    @property
    def label(self) -> str:
        return self.get("experiment", "label") or self.approach

    @property
    def seeds(self) -> list[int]:
        runs, seed = self.int("experiment", "runs"), self.int("experiment", "seed")
        if runs < 1:
            raise ConfigError("experiment.runs must be at least 1")
        return [seed + r for r in range(runs)]

    def image_size(self) -> tuple[int, int]:
        parts = self.get("data", "image_size").replace("x", ",").split(",")
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise ConfigError(f"bad image_size {self.get('data', 'image_size')!r}") from None
        if len(size) != 2:
            raise ConfigError("image_size needs two values, H,W")
        return size

    def backbone(self) -> BackboneConfig:
        profile = self.get("backbone", "profile")
        kw = dict(
            input_size=self.image_size(),
            dense_width=self.int("backbone", "dense_width"),
            activation_slope=self.float("backbone", "activation_slope"),
            bn_momentum=self.float("backbone", "bn_momentum"),
            bn_eps=self.float("backbone", "bn_eps"),
        )
        if profile == "full":
            return BackboneConfig.full(**kw)
        if profile != "desk":
            raise ConfigError(f"backbone.profile must be desk or full, got {profile!r}")
        return BackboneConfig.desk(conv_blocks=parse_blocks(self.get("backbone", "conv_blocks")), **kw)

    def heads(self, n_plant: int, n_disease: int) -> HeadConfig:
        try:
            return HeadConfig(
                n_plant, n_disease,
                task_dense_width=self.int("heads", "task_dense_width"),
                chain_input=self.get("heads", "chain_input"),
                aux_attach=self.get("heads", "aux_attach"),
                final_features=self.get("heads", "final_features"),
                shared_dense=self.bool("heads", "shared_dense"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def weights(self) -> LossWeights | None:
        text = self.get("weights", "balance").strip()
        if not text:
            return None
        try:
            return LossWeights.parse(text)
        except ValueError as exc:
            raise ConfigError(f"weights.balance: {exc}") from None

    def train(self, seed: int) -> TrainConfig:
        try:
            return TrainConfig(
                learning_rate=self.float("train", "learning_rate"),
                batch_size=self.int("train", "batch_size"),
                patience=self.int("train", "patience"),
                max_epochs=self.int("train", "max_epochs"),
                eval_batch_size=self.int("train", "eval_batch_size"),
                seed=seed,
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n_plants=self.int("data", "n_plants"),
            n_diseases=self.int("data", "n_diseases"),
            compatibility=parse_pairs(self.get("data", "compatibility")),
            samples_per_pair=self.int("data", "samples_per_pair"),
            image_size=self.image_size(),
            noise_level=self.float("data", "noise_level"),
            seed=self.int("data", "split_seed"),
        )

    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]

    def to_ini(self) -> str:
        lines = []
        for section in DEFAULTS:
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in self.raw[section].items())
            lines.append("")
        return "\n".join(lines)


def parse_blocks(text: str) -> tuple[tuple[int, int], ...]:
    """``"1x16,1x32"`` -> ((1, 16), (1, 32))."""
    try:
        blocks = tuple(tuple(int(v) for v in item.strip().split("x")) for item in text.split(",") if item.strip())
    except ValueError:
        raise ConfigError(f"conv_blocks must look like '2x64,2x128', got {text!r}") from None
    if not blocks or any(len(b) != 2 for b in blocks):
        raise ConfigError(f"conv_blocks must look like '2x64,2x128', got {text!r}")
    return blocks


def parse_pairs(text: str) -> tuple[tuple[int, int], ...]:
    """``"default"`` or ``"0-0,0-1,1-2"``."""
    if text.strip() == "default":
        return DEFAULT_COMPATIBILITY
    try:
        return tuple(tuple(int(v) for v in item.split("-")) for item in text.split(",") if item.strip())
    except ValueError:
        raise ConfigError(f"compatibility must look like '0-0,0-1', got {text!r}") from None


def load_config(path=None, overrides=()) -> ExperimentConfig:
    raw = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                _assign(raw, section, key, value)
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        _assign(raw, section, name, value.strip())
    cfg = ExperimentConfig(raw)
    cfg.approach  # noqa: B018  validate early
    return cfg


def _assign(raw: dict, section: str, key: str, value: str) -> None:
    if section not in raw:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in raw[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]; known: {', '.join(raw[section])}")
    raw[section][key] = value


# ---------------------------------------------------------------------------
# shared plumbing


def load_split(cfg: ExperimentConfig) -> DatasetSplit:
    source = cfg.get("data", "source")
    if source == "synthetic":
        return generate_synthetic(cfg.synthetic_spec())
    path = cfg.get("data", "path")
    if not path:
        raise ConfigError(f"data.source={source} needs data.path")
    if source == "directory":
        return ingest_directory(path, cfg.image_size(), seed=cfg.int("data", "split_seed"))
    if source == "container":
        split = load_dataset(path)
        if tuple(split.image_shape[1:]) != cfg.image_size():
            raise ConfigError(f"dataset images are {split.image_shape[1:]}, config says {cfg.image_size()}")
        return split
    raise ConfigError(f"data.source must be synthetic, directory or container, got {source!r}")


def run_dir(outdir, cfg: ExperimentConfig) -> Path:
    d = Path(outdir) / cfg.digest()
    d.mkdir(parents=True, exist_ok=True)
    return d


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_hash: str
    config: dict
    seeds: list[int] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    aggregate: str | None = None
    started: str = field(default_factory=_now)
    finished: str | None = None

    def write(self, directory: Path) -> Path:
        missing = [f for f in self.files if not (directory / f).exists()]
        if missing:
            raise RuntimeError(f"manifest references missing files: {missing}")
        self.finished = _now()
        body = {
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "seeds": self.seeds,
            "files": self.files,
            "aggregate": self.aggregate,
            "started": self.started,
            "finished": self.finished,
            "version": __version__,
            "kernel_backend": BACKEND,
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(body, indent=1) + "\n")
        return path


def _write_aggregate(aggs: dict, path: Path, label: str) -> None:
    rows = {t: {m: a.cell(m) for m in ("accuracy", "macro_precision", "macro_recall", "macro_f1")}
            for t, a in aggs.items()}
    body = {"label": label, "n_runs": next(iter(aggs.values())).n_runs, "cells": rows,
            "mean": {t: a.mean for t, a in aggs.items()}, "std": {t: a.std for t, a in aggs.items()}}
    path.write_text(json.dumps(body, indent=1, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_train(cfg: ExperimentConfig, outdir) -> tuple[Path, dict]:
    """R seeded trainings; per-run checkpoints, histories and reports plus a mean ± std aggregate."""
    from .experiment import evaluate, train_approach

    split = load_split(cfg)
    bcfg = cfg.backbone()
    hcfg = cfg.heads(split.n_plant, split.n_disease)
    weights = cfg.weights()
    d = run_dir(outdir, cfg)
    (d / "config.ini").write_text(cfg.to_ini())
    manifest = RunManifest("train", cfg.digest(), cfg.raw, cfg.seeds, ["config.ini"])
    per_run = []
    for r, seed in enumerate(cfg.seeds):
        tcfg = cfg.train(seed)
        log.info("run %d/%d: %s seed %d", r + 1, len(cfg.seeds), cfg.approach, seed)
        model, hists = train_approach(cfg.approach, split, bcfg, hcfg, tcfg, weights)
        for name, h in hists.items():
            fname = f"history_run{r}.csv" if name == "model" else f"history_run{r}_{name}.csv"
            h.write_csv(d / fname)
            manifest.files.append(fname)
        reports = evaluate(model, split, "test", tcfg.eval_batch_size)
        write_reports_json(reports, d / f"reports_run{r}.json")
        write_reports_csv(reports, d / f"reports_run{r}.csv")
        ckpt = f"checkpoint_run{r}"
        save_checkpoint(model, d / ckpt, {"config": cfg.raw, "seed": seed, "plant_names": split.plant_names,
                                          "disease_names": split.disease_names})
        manifest.files += [f"reports_run{r}.json", f"reports_run{r}.csv", ckpt]
        per_run.append(reports)
        log.info("run %d test: %s", r, {t: round(rep.macro_f1, 4) for t, rep in reports.items()})
    aggs = {t: aggregate([rep[t] for rep in per_run]) for t in per_run[0]}
    _write_aggregate(aggs, d / "aggregate.json", cfg.label)
    manifest.files.append("aggregate.json")
    manifest.aggregate = "aggregate.json"
    manifest.write(d)
    return d, aggs


def _prediction_rows(model, images, ids, batch_size: int) -> list[dict]:
    if isinstance(model, MoDsCC):
        rows = []
        for start in range(0, len(images), batch_size):
            bundle = model.forward(images[start:start + batch_size], training=False)
            rows += bundle.records(ids[start:start + batch_size])
        return rows
    p, dz = model.predict(images, batch_size)
    return [{"sample_id": i, "plant_label": int(a), "disease_label": int(b)} for i, a, b in zip(ids, p, dz)]


def cmd_eval(checkpoint, outdir, cfg: ExperimentConfig | None = None, subset: str = "test") -> tuple[Path, dict]:
    """Evaluate a checkpoint; writes prediction records (CSV + JSON) and Plant/Disease/Total reports."""
    from .experiment import evaluate

    model, meta = load_checkpoint(checkpoint)
    cfg = cfg or ExperimentConfig(meta["config"])
    split = load_split(cfg)
    d = run_dir(outdir, cfg) / f"eval_{Path(checkpoint).name}_{subset}"
    d.mkdir(parents=True, exist_ok=True)
    s = getattr(split, subset)
    rows = _prediction_rows(model, s.images, s.ids, cfg.int("train", "eval_batch_size"))
    if isinstance(model, MoDsCC):
        write_records_csv(rows, d / "predictions.csv")
    else:
        with open(d / "predictions.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["sample_id", "plant_label", "disease_label"])
            w.writeheader()
            w.writerows(rows)
    write_records_json(rows, d / "predictions.json")
    reports = evaluate(model, split, subset)
    write_reports_json(reports, d / "reports.json")
    write_reports_csv(reports, d / "reports.csv")
    return d, reports


COMPARE_COLUMNS = [(t, m) for t in TASKS for m in ("accuracy", "macro_f1")]


def cmd_compare(cfgs: list[ExperimentConfig], outdir) -> tuple[Path, list[list[str]]]:
    """Train every config and tabulate mean ± std; the best mean per column gets a ``*``."""
    if len(cfgs) < 2:
        raise ConfigError("compare needs at least two configs")
    ref = cfgs[0]
    for c in cfgs[1:]:
        if c.raw["data"] != ref.raw["data"]:
            raise DataError(f"config {c.label!r} uses a different dataset than {ref.label!r}")
        if c.seeds != ref.seeds:
            raise ConfigError(f"config {c.label!r} uses seeds {c.seeds}, expected {ref.seeds}")
    results = []
    for c in cfgs:
        _, aggs = cmd_train(c, outdir)
        results.append((c.label, aggs))
    best = {}
    for col in COMPARE_COLUMNS:
        vals = [aggs[col[0]].mean[col[1]] for _, aggs in results if col[0] in aggs]
        best[col] = max(vals) if vals else None
    header = ["approach"] + [f"{t} {'Acc.' if m == 'accuracy' else 'F1'}" for t, m in COMPARE_COLUMNS]
    table = [header]
    for label, aggs in results:
        row = [label]
        for t, m in COMPARE_COLUMNS:
            if t not in aggs:
                row.append("-")
                continue
            cell = aggs[t].cell(m)
            row.append(cell + (" *" if aggs[t].mean[m] == best[(t, m)] else ""))
        table.append(row)
    key = hashlib.sha256("|".join(c.canonical() for c in cfgs).encode()).hexdigest()[:12]
    d = Path(outdir) / f"compare_{key}"
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "compare.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(table)
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    text = "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)) for r in table)
    (d / "compare.txt").write_text(text + "\n")
    manifest = RunManifest("compare", key, {c.label: c.raw for c in cfgs}, ref.seeds, ["compare.csv", "compare.txt"])
    manifest.write(d)
    return d, table


def cmd_gridsearch(cfg: ExperimentConfig, outdir, values=(0.1, 0.4, 0.5), fixed=None, n_jobs: int = 1):
    split = load_split(cfg)
    grid = weight_grid(values, fixed)
    results = grid_search(grid, split, cfg.backbone(), cfg.heads(split.n_plant, split.n_disease),
                          cfg.train(cfg.seeds[0]), n_jobs)
    d = run_dir(outdir, cfg)
    write_grid_csv(results, d / "grid.csv")
    RunManifest("gridsearch", cfg.digest(), cfg.raw, cfg.seeds[:1], ["grid.csv"]).write(d)
    return d, results


def cmd_levels(checkpoint, outdir, cfg: ExperimentConfig | None = None, subset: str = "test"):
    """Accuracy and macro-F1 of the aux, temp and final heads for Plant, Disease and Total."""
    model, meta = load_checkpoint(checkpoint)
    if not isinstance(model, MoDsCC):
        raise ConfigError(f"levels needs a Mo-DsCC checkpoint, got a {model.kind} model")
    cfg = cfg or ExperimentConfig(meta["config"])
    split = load_split(cfg)
    s = getattr(split, subset)
    bs = cfg.int("train", "eval_batch_size")
    labels = {h: [] for h in HEADS}
    for start in range(0, len(s), bs):
        for h, v in model.forward(s.images[start:start + bs], training=False).labels().items():
            labels[h].append(v)
    labels = {h: np.concatenate(v) for h, v in labels.items()}
    rows = []
    for level, ph, dh in LEVELS:
        reps = task_reports(s.plant, labels[ph], s.disease, labels[dh], split.n_plant, split.n_disease)
        for task in TASKS:
            rows.append((level, task, reps[task].accuracy, reps[task].macro_f1))
    d = run_dir(outdir, cfg) / f"levels_{Path(checkpoint).name}_{subset}"
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "levels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "task", "accuracy", "macro_f1"])
        w.writerows([lvl, t, repr(a), repr(f)] for lvl, t, a, f in rows)
    with open(d / "levels_plot.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "level", *TASKS])
        for x, (level, _, _) in enumerate(LEVELS, 1):
            w.writerow([x, level, *(repr(f) for lvl, _, _, f in rows if lvl == level)])
    log.info("chance accuracy: plant %.3f disease %.3f", chance_level(split.n_plant), chance_level(split.n_disease))
    return d, rows


def cmd_synth_gen(cfg: ExperimentConfig, out, fmt: str = "container") -> Path:
    """Write the configured synthetic corpus as a dataset container or a PNG class-folder tree."""
    split = generate_synthetic(cfg.synthetic_spec())
    out = Path(out)
    if fmt == "container":
        return save_dataset(split, out)
    if fmt != "png":
        raise ConfigError(f"synth-gen format must be container or png, got {fmt!r}")
    from PIL import Image

    for s in (split.train, split.val, split.test):
        for img in s:
            cls = f"{split.plant_names[img.plant_id]}__{split.disease_names[img.disease_id]}"
            (out / cls).mkdir(parents=True, exist_ok=True)
            pixels = np.round(img.pixels.transpose(1, 2, 0) * 255).astype(np.uint8)
            Image.fromarray(pixels).save(out / cls / (Path(img.source).name + ".png"))
    return out


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modscc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1 keeps runs byte-reproducible)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="INI experiment file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
        sp.add_argument("--outdir", default="runs", help="results root (default: runs)")

    sp = sub.add_parser("train", help="train R seeded runs of one approach")
    common(sp, config_required=False)

    sp = sub.add_parser("eval", help="evaluate a checkpoint and write prediction records")
    common(sp, config_required=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--subset", choices=("train", "val", "test"), default="test")

    sp = sub.add_parser("compare", help="train several configs and tabulate mean ± std")
    sp.add_argument("--config", action="append", required=True, help="INI file (give two or more)")
    sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override applied to every config")
    sp.add_argument("--outdir", default="runs")

    sp = sub.add_parser("gridsearch", help="rank balance-weight vectors by validation Total macro-F1")
    common(sp, config_required=False)
    sp.add_argument("--values", default="0.1,0.4,0.5", help="candidate values per weight")
    sp.add_argument("--fix", action="append", default=[], metavar="NAME=VALUE", help="pin one weight (repeatable)")
    sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("levels", help="F1 of the aux, temp and final heads of a Mo-DsCC checkpoint")
    common(sp, config_required=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--subset", choices=("train", "val", "test"), default="test")

    sp = sub.add_parser("synth-gen", help="write the configured synthetic corpus to disk")
    common(sp, config_required=False)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=("container", "png"), default="container")
    return p


def _dispatch(args) -> int:
    overrides = args.set
    if args.command == "compare":
        cfgs = [load_config(path, overrides) for path in args.config]
        d, table = cmd_compare(cfgs, args.outdir)
        print((d / "compare.txt").read_text(), end="")
        return EXIT_OK
    cfg = load_config(args.config, overrides) if (args.config or overrides) else None
    if args.command == "train":
        d, aggs = cmd_train(cfg or load_config(), args.outdir)
        for task, a in aggs.items():
            print(f"{task:<8} acc {a.cell('accuracy')}  F1 {a.cell('macro_f1')}")
        print(d)
    elif args.command == "eval":
        d, reports = cmd_eval(args.checkpoint, args.outdir, cfg, args.subset)
        for task, r in reports.items():
            print(f"{task:<8} acc {r.accuracy:.5f}  F1 {r.macro_f1:.5f}")
        print(d)
    elif args.command == "gridsearch":
        try:
            values = [float(v) for v in args.values.split(",")]
            fixed = {k.strip(): float(v) for k, v in (f.split("=", 1) for f in args.fix)}
        except ValueError:
            raise ConfigError("--values and --fix need numbers") from None
        d, results = cmd_gridsearch(cfg or load_config(), args.outdir, values, fixed, args.jobs)
        for rank, r in enumerate(results[:5], 1):
            print(f"{rank}. {r.weights}  val Total F1 {r.val_total_f1:.5f}")
        print(d)
    elif args.command == "levels":
        d, rows = cmd_levels(args.checkpoint, args.outdir, cfg, args.subset)
        for level, task, acc, f1 in rows:
            print(f"{level:<6} {task:<8} acc {acc:.5f}  F1 {f1:.5f}")
        print(d)
    elif args.command == "synth-gen":
        print(cmd_synth_gen(cfg or load_config(), args.out, args.format))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=max(args.threads, 1)):
            return _dispatch(args)
    except (DataError, ContainerError, FileNotFoundError) as exc:
        print(f"modscc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"modscc: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # ConfigError and the validation errors of the config dataclasses
        print(f"modscc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
