"""Train-and-evaluate runs for one approach, repeated over seeds."""
from __future__ import annotations

from dataclasses import dataclass, replace

from .backbone import BackboneConfig
from .data import DatasetSplit
from .heads import HeadConfig
from .losses import LossWeights
from .metrics import MetricReport, RunAggregate, aggregate, task_reports
from .models import MultiModel, build_model
from .trainer import History, TrainConfig, fit


@dataclass
class RunResult:
    approach: str
    seed: int
    model: object
    histories: dict[str, History]
    reports: dict[str, MetricReport]


def train_approach(approach: str, split: DatasetSplit, backbone_cfg: BackboneConfig, head_cfg: HeadConfig,
                   config: TrainConfig, weights: LossWeights | None = None) -> tuple[object, dict[str, History]]:
    """Build and fit the network(s) of ``approach``; multi-model trains its two members separately."""
    model = build_model(approach, backbone_cfg, head_cfg, config.seed, weights, split.joint_pairs)
    if isinstance(model, MultiModel):
        hists = {task: fit(m, split, config) for task, m in model.members.items()}
    else:
        hists = {"model": fit(model, split, config)}
    return model, hists


def evaluate(model, split: DatasetSplit, subset: str = "test", batch_size: int = 64) -> dict[str, MetricReport]:
    s = getattr(split, subset)
    p, d = model.predict(s.images, batch_size)
    return task_reports(s.plant, p, s.disease, d, split.n_plant, split.n_disease)


def run_once(approach: str, split: DatasetSplit, backbone_cfg, head_cfg, config: TrainConfig,
             weights: LossWeights | None = None) -> RunResult:
    model, hists = train_approach(approach, split, backbone_cfg, head_cfg, config, weights)
    return RunResult(approach, config.seed, model, hists, evaluate(model, split, "test", config.eval_batch_size))


def run_seeds(approach: str, split: DatasetSplit, backbone_cfg, head_cfg, config: TrainConfig,
              seeds, weights: LossWeights | None = None) -> list[RunResult]:
    return [run_once(approach, split, backbone_cfg, head_cfg, replace(config, seed=s), weights) for s in seeds]


def aggregate_runs(runs: list[RunResult]) -> dict[str, RunAggregate]:
    tasks = runs[0].reports.keys()
    return {t: aggregate([r.reports[t] for r in runs]) for t in tasks}
