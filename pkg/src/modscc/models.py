"""Trainable networks: Mo-DsCC and the single-model baselines it is compared against.

All networks share the same parameter naming (``backbone.*``, ``shared.*``,
``branch_p.*``, ``head_p_temp.*`` ...), and initial values are keyed by
(seed, name).  A baseline built independently therefore starts from exactly
the same weights as the matching slice of a Mo-DsCC network.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .backbone import Backbone, BackboneConfig
from .heads import HEAD_TASK, ChainHeads, HeadConfig, PredictionBundle
from .losses import (
    GroundTruthBatch,
    LossWeights,
    reduce_to_baseline,
    total_loss,
    weighted_head_loss,
)
from .nn import Dense, DenseBlock, ParamStore
from .tensor import Tensor

APPROACHES = ("mo_dscc", "mo_cc", "multi_output", "multi_model", "multi_label_powerset")


class Network:
    """Common surface the trainer relies on."""

    kind = "network"
    backbone_cfg: BackboneConfig
    store: ParamStore
    head_weights: dict[str, float]
    head_task: dict[str, str]

    def _images(self, images) -> Tensor:
        data = images.data if isinstance(images, Tensor) else images
        return Tensor(np.asarray(data, dtype=self.store.dtype))

    def outputs(self, images, training: bool) -> dict[str, Tensor]:
        raise NotImplementedError

    def make_truth(self, plant, disease) -> GroundTruthBatch:
        return GroundTruthBatch(plant, disease, self.head_cfg.n_plant_classes, self.head_cfg.n_disease_classes)

    def loss(self, outputs: dict[str, Tensor], truth: GroundTruthBatch):
        return weighted_head_loss(outputs, truth, self.head_weights, self.head_task)

    def predict_batch(self, images) -> tuple[np.ndarray | None, np.ndarray | None]:
        raise NotImplementedError

    def predict(self, images, batch_size: int = 64):
        """Eval-mode (plant, disease) labels; argmax ties go to the lowest index."""
        images = np.asarray(images)
        plant, disease = [], []
        for start in range(0, len(images), batch_size):
            p, d = self.predict_batch(images[start:start + batch_size])
            plant.append(p)
            disease.append(d)
        cat = lambda parts: None if parts[0] is None else np.concatenate(parts)  # noqa: E731
        return cat(plant), cat(disease)

    def describe(self) -> dict:
        raise NotImplementedError


def _argmax(t: Tensor) -> np.ndarray:
    return np.argmax(t.data, axis=1)


class MoDsCC(Network):
    """Backbone + auxiliary, temporary and chained final heads."""

    kind = "mo_dscc"

    def __init__(self, backbone_cfg: BackboneConfig, head_cfg: HeadConfig,
                 weights: LossWeights | None = None, seed: int = 0, dtype=np.float32):
        self.backbone_cfg, self.head_cfg = backbone_cfg, head_cfg
        self.weights = weights or LossWeights()
        self.seed = seed
        self.store = ParamStore(seed, dtype)
        self.backbone = Backbone(backbone_cfg, self.store)
        self.heads = ChainHeads(
            head_cfg, self.store, backbone_cfg.feature_width, backbone_cfg.dense_width,
            backbone_cfg.activation_slope, backbone_cfg.bn_momentum, backbone_cfg.bn_eps,
        )
        self.head_task = dict(HEAD_TASK)

    @property
    def head_weights(self) -> dict[str, float]:
        return self.weights.head_weights()

    @property
    def mode(self):
        return reduce_to_baseline(self.weights)

    def forward(self, images, training: bool) -> PredictionBundle:
        x = self.backbone(self._images(images), training)
        return self.heads(x, training)

    def features(self, images, training: bool = False) -> Tensor:
        return self.backbone(self._images(images), training)

    def outputs(self, images, training: bool) -> dict[str, Tensor]:
        return self.forward(images, training).logits

    def loss(self, outputs, truth):
        return total_loss(outputs, truth, self.weights, return_terms=True)

    def predict_batch(self, images):
        bundle = self.forward(images, training=False)
        mode = self.mode
        p = _argmax(bundle[mode.plant_head].probs) if mode.plant_head else None
        d = _argmax(bundle[mode.disease_head].probs) if mode.disease_head else None
        return p, d

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dtype": self.store.dtype.name,
            "backbone": _backbone_dict(self.backbone_cfg),
            "heads": _head_dict(self.head_cfg),
            "weights": list(self.weights.as_tuple()),
        }


class MultiOutputNet(Network):
    """Backbone + shared dense + one branch and softmax head per task.

    With both tasks this is the multi-output baseline; with one task it is a
    single-task CNN (one member of the multi-model baseline).
    """

    kind = "multi_output"

    def __init__(self, backbone_cfg: BackboneConfig, head_cfg: HeadConfig,
                 tasks: Sequence[str] = ("plant", "disease"), seed: int = 0, dtype=np.float32):
        tasks = tuple(tasks)
        if not tasks or any(t not in ("plant", "disease") for t in tasks):
            raise ValueError(f"tasks must be a non-empty subset of plant/disease, got {tasks}")
        self.backbone_cfg, self.head_cfg, self.tasks, self.seed = backbone_cfg, head_cfg, tasks, seed
        self.store = ParamStore(seed, dtype)
        self.backbone = Backbone(backbone_cfg, self.store)
        cfg, b = head_cfg, backbone_cfg
        bn = dict(momentum=b.bn_momentum, eps=b.bn_eps)
        width = b.feature_width
        self.shared = None
        if cfg.shared_dense:
            self.shared = DenseBlock(self.store, "shared", width, b.dense_width, b.activation_slope, **bn)
            width = b.dense_width
        self.branches, self.out = {}, {}
        n_classes = {"plant": cfg.n_plant_classes, "disease": cfg.n_disease_classes}
        for task in tasks:
            t = task[0]
            self.branches[task] = DenseBlock(self.store, f"branch_{t}", width, cfg.task_dense_width,
                                             b.activation_slope, **bn)
            self.out[task] = Dense(self.store, f"head_{t}_temp", cfg.task_dense_width, n_classes[task])
        self.head_task = {f"{t[0]}_temp": t for t in tasks}
        self.head_weights = {h: 1.0 for h in self.head_task}

    def outputs(self, images, training):
        x = self.backbone(self._images(images), training)
        h = self.shared(x, training) if self.shared is not None else x
        return {f"{t[0]}_temp": self.out[t](self.branches[t](h, training)) for t in self.tasks}

    def predict_batch(self, images):
        out = self.outputs(images, training=False)
        p = _argmax(out["p_temp"]) if "p_temp" in out else None
        d = _argmax(out["d_temp"]) if "d_temp" in out else None
        return p, d

    def describe(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dtype": self.store.dtype.name,
            "backbone": _backbone_dict(self.backbone_cfg),
            "heads": _head_dict(self.head_cfg),
            "tasks": list(self.tasks),
        }


class PowersetNet(Network):
    """Single softmax over observed (plant, disease) pairs."""

    kind = "multi_label_powerset"

    def __init__(self, backbone_cfg: BackboneConfig, head_cfg: HeadConfig,
                 joint_pairs: Sequence[tuple[int, int]], seed: int = 0, dtype=np.float32):
        self.backbone_cfg, self.head_cfg, self.seed = backbone_cfg, head_cfg, seed
        self.joint_pairs = [tuple(int(v) for v in p) for p in joint_pairs]
        if len(self.joint_pairs) < 2:
            raise ValueError("power-set model needs at least 2 joint classes")
        self.pair_index = {p: i for i, p in enumerate(self.joint_pairs)}
        self.store = ParamStore(seed, dtype)
        self.backbone = Backbone(backbone_cfg, self.store)
        cfg, b = head_cfg, backbone_cfg
        bn = dict(momentum=b.bn_momentum, eps=b.bn_eps)
        width = b.feature_width
        self.shared = None
        if cfg.shared_dense:
            self.shared = DenseBlock(self.store, "shared", width, b.dense_width, b.activation_slope, **bn)
            width = b.dense_width
        self.branch = DenseBlock(self.store, "branch_j", width, cfg.task_dense_width, b.activation_slope, **bn)
        self.head = Dense(self.store, "head_joint", cfg.task_dense_width, len(self.joint_pairs))
        self.head_task = {"joint": "joint"}
        self.head_weights = {"joint": 1.0}

    def make_truth(self, plant, disease) -> GroundTruthBatch:
        return GroundTruthBatch(plant, disease, self.head_cfg.n_plant_classes, self.head_cfg.n_disease_classes,
                                joint=self.joint_labels(plant, disease), n_joint=len(self.joint_pairs))

    def joint_labels(self, plant, disease) -> np.ndarray:
        try:
            return np.array([self.pair_index[(int(p), int(d))] for p, d in zip(plant, disease)], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"pair {exc.args[0]} is not a known joint class") from None

    def outputs(self, images, training):
        x = self.backbone(self._images(images), training)
        h = self.shared(x, training) if self.shared is not None else x
        return {"joint": self.head(self.branch(h, training))}

    def predict_batch(self, images):
        j = _argmax(self.outputs(images, training=False)["joint"])
        pairs = np.asarray(self.joint_pairs, dtype=np.int64)[j]
        return pairs[:, 0], pairs[:, 1]

    def describe(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dtype": self.store.dtype.name,
            "backbone": _backbone_dict(self.backbone_cfg),
            "heads": _head_dict(self.head_cfg),
            "joint_pairs": [list(p) for p in self.joint_pairs],
        }


class MultiModel:
    """Two independent single-task networks, one per label."""

    kind = "multi_model"

    def __init__(self, backbone_cfg: BackboneConfig, head_cfg: HeadConfig, seed: int = 0, dtype=np.float32):
        self.backbone_cfg, self.head_cfg, self.seed = backbone_cfg, head_cfg, seed
        self.members = {
            "plant": MultiOutputNet(backbone_cfg, head_cfg, ("plant",), seed, dtype),
            # offset seed: the two members must not start from identical backbones
            "disease": MultiOutputNet(backbone_cfg, head_cfg, ("disease",), seed + 7919, dtype),
        }

    def predict(self, images, batch_size: int = 64):
        p, _ = self.members["plant"].predict(images, batch_size)
        _, d = self.members["disease"].predict(images, batch_size)
        return p, d

    def describe(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dtype": self.members["plant"].store.dtype.name,
            "backbone": _backbone_dict(self.backbone_cfg),
            "heads": _head_dict(self.head_cfg),
        }


def _backbone_dict(cfg: BackboneConfig) -> dict:
    return {
        "conv_blocks": [list(b) for b in cfg.conv_blocks],
        "input_size": list(cfg.input_size),
        "in_channels": cfg.in_channels,
        "dense_width": cfg.dense_width,
        "activation_slope": cfg.activation_slope,
        "bn_momentum": cfg.bn_momentum,
        "bn_eps": cfg.bn_eps,
        "reduced": cfg.reduced,
    }


def _head_dict(cfg: HeadConfig) -> dict:
    return {
        "n_plant_classes": cfg.n_plant_classes,
        "n_disease_classes": cfg.n_disease_classes,
        "task_dense_width": cfg.task_dense_width,
        "chain_input": cfg.chain_input,
        "aux_attach": cfg.aux_attach,
        "final_features": cfg.final_features,
        "shared_dense": cfg.shared_dense,
    }


def model_from_description(desc: dict):
    """Rebuild an untrained network from :meth:`describe` output."""
    b = dict(desc["backbone"])
    b["conv_blocks"] = tuple(tuple(x) for x in b["conv_blocks"])
    b["input_size"] = tuple(b["input_size"])
    bcfg = BackboneConfig(**b)
    hcfg = HeadConfig(**desc["heads"])
    seed, dtype, kind = desc["seed"], np.dtype(desc["dtype"]), desc["kind"]
    if kind == "mo_dscc":
        return MoDsCC(bcfg, hcfg, LossWeights.of(desc["weights"]), seed, dtype)
    if kind == "multi_output":
        return MultiOutputNet(bcfg, hcfg, desc["tasks"], seed, dtype)
    if kind == "multi_label_powerset":
        return PowersetNet(bcfg, hcfg, [tuple(p) for p in desc["joint_pairs"]], seed, dtype)
    if kind == "multi_model":
        return MultiModel(bcfg, hcfg, seed, dtype)
    raise ValueError(f"unknown model kind {kind!r}")


def build_model(approach: str, backbone_cfg: BackboneConfig, head_cfg: HeadConfig, seed: int,
                weights: LossWeights | None = None, joint_pairs=None, dtype=np.float32):
    """Network for one named approach of the comparison."""
    from .losses import MO_CC, MULTI_OUTPUT, MO_DSCC_WEIGHTS

    if approach == "mo_dscc":
        return MoDsCC(backbone_cfg, head_cfg, weights or MO_DSCC_WEIGHTS, seed, dtype)
    if approach == "mo_cc":
        return MoDsCC(backbone_cfg, head_cfg, weights or MO_CC, seed, dtype)
    if approach == "multi_output":
        # the multi-output reduction of the weighted loss; predictions come from the temporary heads
        if weights is not None and weights != MULTI_OUTPUT:
            raise ValueError("multi_output uses the fixed weights 0:0:1:1:0:0")
        return MoDsCC(backbone_cfg, head_cfg, MULTI_OUTPUT, seed, dtype)
    if approach == "multi_model":
        return MultiModel(backbone_cfg, head_cfg, seed, dtype)
    if approach == "multi_label_powerset":
        if joint_pairs is None:
            raise ValueError("multi_label_powerset needs the joint class list")
        return PowersetNet(backbone_cfg, head_cfg, joint_pairs, seed, dtype)
    raise ValueError(f"unknown approach {approach!r}; choose from {APPROACHES}")
