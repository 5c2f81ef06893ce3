"""The three-level prediction head: auxiliary, temporary and chained final outputs.

Level 1 (deep supervision) reads the pooled features directly.  Level 2 runs
one dense branch per task.  Level 3 predicts each task from the pooled
features concatenated with the *other* task's level-2 probabilities, so the
plant guess informs the disease output and vice versa.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .nn import Dense, DenseBlock, ParamStore
from .tensor import Tensor

HEADS = ("p_aux", "d_aux", "p_temp", "d_temp", "p_final", "d_final")
HEAD_TASK = {h: ("plant" if h.startswith("p_") else "disease") for h in HEADS}
LEVELS = (("aux", "p_aux", "d_aux"), ("temp", "p_temp", "d_temp"), ("final", "p_final", "d_final"))

CHAIN_INPUTS = ("probabilities", "logits")
AUX_ATTACH = ("gap", "dense")
FINAL_FEATURES = ("gap", "branch")


@dataclass(frozen=True)
class HeadConfig:
    """Class spaces and wiring options of the head network.

    ``chain_input`` selects what is concatenated into the final heads.
    ``aux_attach`` places the auxiliary heads on the pooled features or on the
    shared dense output.  ``final_features`` picks pooled features or the task
    branch output as the "global features" of the final heads.
    ``shared_dense=False`` feeds the task branches from the pooled features.
    """

    n_plant_classes: int
    n_disease_classes: int
    task_dense_width: int = 4096
    chain_input: str = "probabilities"
    aux_attach: str = "gap"
    final_features: str = "gap"
    shared_dense: bool = True

    def __post_init__(self):
        if self.n_plant_classes < 2 or self.n_disease_classes < 2:
            raise ValueError("each task needs at least 2 classes")
        if self.task_dense_width < 1:
            raise ValueError("task_dense_width must be positive")
        for value, allowed, field in (
            (self.chain_input, CHAIN_INPUTS, "chain_input"),
            (self.aux_attach, AUX_ATTACH, "aux_attach"),
            (self.final_features, FINAL_FEATURES, "final_features"),
        ):
            if value not in allowed:
                raise ValueError(f"{field} must be one of {allowed}, got {value!r}")


@dataclass
class HeadOutput:
    logits: Tensor
    probs: Tensor


@dataclass
class PredictionBundle:
    p_aux: HeadOutput
    d_aux: HeadOutput
    p_temp: HeadOutput
    d_temp: HeadOutput
    p_final: HeadOutput
    d_final: HeadOutput

    def __getitem__(self, head: str) -> HeadOutput:
        if head not in HEADS:
            raise KeyError(head)
        return getattr(self, head)

    @property
    def logits(self) -> dict[str, Tensor]:
        return {h: self[h].logits for h in HEADS}

    def labels(self) -> dict[str, np.ndarray]:
        """Argmax per head; ties go to the lowest class index."""
        return {h: np.argmax(self[h].probs.data, axis=1) for h in HEADS}

    def max_probs(self) -> dict[str, np.ndarray]:
        return {h: self[h].probs.data.max(axis=1) for h in HEADS}

    def records(self, sample_ids: Sequence | None = None) -> list[dict]:
        labels, conf = self.labels(), self.max_probs()
        n = self.p_final.probs.shape[0]
        ids = list(range(n)) if sample_ids is None else list(sample_ids)
        if len(ids) != n:
            raise ValueError(f"{len(ids)} sample ids for {n} predictions")
        rows = []
        for i, sid in enumerate(ids):
            row = {"sample_id": sid}
            row.update({f"{h}_label": int(labels[h][i]) for h in HEADS})
            row.update({f"{h}_prob": float(conf[h][i]) for h in HEADS})
            rows.append(row)
        return rows


RECORD_FIELDS = ["sample_id"] + [f"{h}_label" for h in HEADS] + [f"{h}_prob" for h in HEADS]


def write_records_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_records_json(rows: Iterable[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump(list(rows), fh, indent=1)


def read_records_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {"sample_id": row["sample_id"]}
            rec.update({f"{h}_label": int(row[f"{h}_label"]) for h in HEADS})
            rec.update({f"{h}_prob": float(row[f"{h}_prob"]) for h in HEADS})
            out.append(rec)
    return out


class ChainHeads:
    def __init__(self, config: HeadConfig, store: ParamStore, feature_width: int, dense_width: int,
                 slope: float = 0.01, bn_momentum: float = 0.9, bn_eps: float = 1e-5):
        self.config = config
        self.feature_width = feature_width
        self.slope = slope
        cfg = config
        bn = dict(momentum=bn_momentum, eps=bn_eps)
        branch_in = feature_width
        self.shared = None
        if cfg.shared_dense:
            self.shared = DenseBlock(store, "shared", feature_width, dense_width, slope, **bn)
            branch_in = dense_width
        aux_in = dense_width if (cfg.aux_attach == "dense" and cfg.shared_dense) else feature_width
        if cfg.aux_attach == "dense" and not cfg.shared_dense:
            raise ValueError("aux_attach='dense' needs shared_dense=True")
        self.aux_in = aux_in
        self.head_p_aux = Dense(store, "head_p_aux", aux_in, cfg.n_plant_classes)
        self.head_d_aux = Dense(store, "head_d_aux", aux_in, cfg.n_disease_classes)
        self.branch_p = DenseBlock(store, "branch_p", branch_in, cfg.task_dense_width, slope, **bn)
        self.branch_d = DenseBlock(store, "branch_d", branch_in, cfg.task_dense_width, slope, **bn)
        self.head_p_temp = Dense(store, "head_p_temp", cfg.task_dense_width, cfg.n_plant_classes)
        self.head_d_temp = Dense(store, "head_d_temp", cfg.task_dense_width, cfg.n_disease_classes)
        final_feat = feature_width if cfg.final_features == "gap" else cfg.task_dense_width
        self.final_feature_width = final_feat
        # disease final sees plant evidence and the reverse
        self.head_d_final = Dense(store, "head_d_final", final_feat + cfg.n_plant_classes, cfg.n_disease_classes)
        self.head_p_final = Dense(store, "head_p_final", final_feat + cfg.n_disease_classes, cfg.n_plant_classes)

    def _out(self, logits: Tensor) -> HeadOutput:
        return HeadOutput(logits, T.softmax(logits))

    def __call__(self, x: Tensor, training: bool) -> PredictionBundle:
        cfg = self.config
        if x.data.ndim != 2 or x.shape[1] != self.feature_width:
            raise T.ShapeError(f"heads expect N x {self.feature_width} features, got {x.shape}")
        h = self.shared(x, training) if self.shared is not None else x
        aux_src = h if cfg.aux_attach == "dense" else x
        p_aux = self._out(self.head_p_aux(aux_src))
        d_aux = self._out(self.head_d_aux(aux_src))
        gp = self.branch_p(h, training)
        gd = self.branch_d(h, training)
        p_temp = self._out(self.head_p_temp(gp))
        d_temp = self._out(self.head_d_temp(gd))
        if cfg.chain_input == "probabilities":
            p_link, d_link = p_temp.probs, d_temp.probs
        else:
            p_link, d_link = p_temp.logits, d_temp.logits
        feat_d = x if cfg.final_features == "gap" else gd
        feat_p = x if cfg.final_features == "gap" else gp
        d_final = self._out(self.head_d_final(T.concat([feat_d, p_link], axis=1)))
        p_final = self._out(self.head_p_final(T.concat([feat_p, d_link], axis=1)))
        return PredictionBundle(p_aux, d_aux, p_temp, d_temp, p_final, d_final)


def record_all_levels(bundle: PredictionBundle) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """(level, plant labels, disease labels) rows ordered aux, temp, final."""
    labels = bundle.labels()
    return [(level, labels[ph], labels[dh]) for level, ph, dh in LEVELS]
