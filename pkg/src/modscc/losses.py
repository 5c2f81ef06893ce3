"""Balance weights, the six-term weighted cross-entropy and its reduced special cases."""
from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .heads import HEAD_TASK, PredictionBundle
from .tensor import Tensor

# Field order doubles as the textual order "beta_a:delta_a:beta_1:delta_1:beta_2:delta_2".
WEIGHT_FIELDS = ("beta_a", "delta_a", "beta_1", "delta_1", "beta_2", "delta_2")
WEIGHT_HEAD = dict(zip(WEIGHT_FIELDS, ("p_aux", "d_aux", "p_temp", "d_temp", "p_final", "d_final")))
# summation order of the total loss: aux pair, then plant temp/final, then disease temp/final
SUM_ORDER = ("beta_a", "delta_a", "beta_1", "beta_2", "delta_1", "delta_2")


@dataclass(frozen=True)
class LossWeights:
    beta_a: float = 0.1
    delta_a: float = 0.1
    beta_1: float = 0.1
    delta_1: float = 0.1
    beta_2: float = 0.4
    delta_2: float = 0.5

    def __post_init__(self):
        vals = astuple(self)
        if any(not np.isfinite(v) for v in vals):
            raise ValueError(f"balance weights must be finite: {vals}")
        if any(v < 0 for v in vals):
            raise ValueError(f"balance weights must be non-negative: {vals}")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one balance weight must be positive")

    @classmethod
    def of(cls, values: Sequence[float]) -> "LossWeights":
        """Build from six values ordered beta_a, delta_a, beta_1, delta_1, beta_2, delta_2."""
        values = [float(v) for v in values]
        if len(values) != 6:
            raise ValueError(f"expected 6 balance weights, got {len(values)}")
        return cls(*values)

    @classmethod
    def parse(cls, text: str) -> "LossWeights":
        """Parse ``"0.1:0.1:0.1:0.1:0.4:0.5"`` (colons or commas)."""
        return cls.of(text.replace(",", ":").split(":"))

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)

    def head_weights(self) -> dict[str, float]:
        return {WEIGHT_HEAD[f.name]: getattr(self, f.name) for f in fields(self)}

    def __str__(self) -> str:
        return ":".join(f"{v:g}" for v in astuple(self))


MO_DSCC_WEIGHTS = LossWeights(0.1, 0.1, 0.1, 0.1, 0.4, 0.5)
PLANT_ONLY = LossWeights(0, 0, 1, 0, 0, 0)
DISEASE_ONLY = LossWeights(0, 0, 0, 1, 0, 0)
MULTI_OUTPUT = LossWeights(0, 0, 1, 1, 0, 0)
# chains without deep supervision: the preset with the auxiliary pair switched off
MO_CC = LossWeights(0, 0, 0.1, 0.1, 0.4, 0.5)


@dataclass(frozen=True)
class BaselineMode:
    name: str  # plant-only | disease-only | multi-output | full
    plant_head: str | None
    disease_head: str | None

    @property
    def output_heads(self) -> tuple[str, ...]:
        return tuple(h for h in (self.plant_head, self.disease_head) if h is not None)


def reduce_to_baseline(w: LossWeights) -> BaselineMode:
    """Name the model a weight vector degenerates to, and which heads are its outputs.

    Only the *pattern* of non-zero weights matters: a lone positive beta_1
    is a single plant classifier read from the temporary head, and so on.
    Anything else is the full chained model read from the final heads.
    """
    nz = {name for name, v in zip(WEIGHT_FIELDS, w.as_tuple()) if v > 0}
    if nz == {"beta_1"}:
        return BaselineMode("plant-only", "p_temp", None)
    if nz == {"delta_1"}:
        return BaselineMode("disease-only", None, "d_temp")
    if nz == {"beta_1", "delta_1"}:
        return BaselineMode("multi-output", "p_temp", "d_temp")
    return BaselineMode("full", "p_final", "d_final")


def one_hot(labels, k: int, dtype=np.float64) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-d")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels out of range [0, {k})")
    out = np.zeros((labels.size, k), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


@dataclass
class GroundTruthBatch:
    """Targets for the six heads.  Every level is supervised by the same labels."""

    plant: np.ndarray
    disease: np.ndarray
    n_plant: int
    n_disease: int
    joint: np.ndarray | None = None
    n_joint: int | None = None

    def __post_init__(self):
        self.plant = np.asarray(self.plant, dtype=np.int64)
        self.disease = np.asarray(self.disease, dtype=np.int64)
        if self.plant.shape != self.disease.shape:
            raise ValueError("plant and disease label arrays differ in length")

    def onehot(self, task: str, dtype=np.float64) -> np.ndarray:
        if task == "plant":
            return one_hot(self.plant, self.n_plant, dtype)
        if task == "disease":
            return one_hot(self.disease, self.n_disease, dtype)
        if task == "joint":
            if self.joint is None:
                raise ValueError("batch carries no joint labels")
            return one_hot(self.joint, self.n_joint, dtype)
        raise KeyError(task)

    # named as in the weighted loss: level a (auxiliary), 1 (temporary), 2 (final)
    P_a = P_1 = P_2 = property(lambda self: self.onehot("plant"))
    D_a = D_1 = D_2 = property(lambda self: self.onehot("disease"))


def weighted_head_loss(
    logits: Mapping[str, Tensor],
    truth: GroundTruthBatch,
    head_weights: Mapping[str, float],
    head_task: Mapping[str, str],
    order: Sequence[str] | None = None,
) -> tuple[Tensor, dict[str, Tensor]]:
    """Sum of ``weight * cross_entropy`` over the named heads, in ``order``."""
    order = list(order if order is not None else head_weights)
    terms = {}
    for head in order:
        z = logits[head]
        terms[head] = T.cross_entropy(z, truth.onehot(head_task[head], z.dtype))
    total = T.weighted_sum([terms[h] for h in order], [head_weights[h] for h in order])
    return total, terms


def total_loss(bundle: PredictionBundle | Mapping[str, Tensor], truth: GroundTruthBatch, w: LossWeights,
               return_terms: bool = False):
    """beta_a L(P_a) + delta_a L(D_a) + beta_1 L(P_1) + beta_2 L(P_2) + delta_1 L(D_1) + delta_2 L(D_2)."""
    logits = bundle.logits if isinstance(bundle, PredictionBundle) else bundle
    hw = w.head_weights()
    order = [WEIGHT_HEAD[f] for f in SUM_ORDER]
    total, terms = weighted_head_loss(logits, truth, hw, HEAD_TASK, order)
    if return_terms:
        return total, terms
    return total

