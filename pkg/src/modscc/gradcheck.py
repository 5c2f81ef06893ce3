"""Central finite-difference gradient checking.

The numerical side never touches the tape: it re-runs the forward function
with one coordinate nudged by +-h.  Coordinates whose stencil crosses a kink
(a leaky-ReLU input changing sign or a max-pool argmax moving) are skipped and
counted, because the derivative is not defined across them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Parameter, Tape, Tensor, branch_trace


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_skipped: int
    worst: tuple[str, tuple] | None = None

    def ok(self, tol: float) -> bool:
        return self.n_checked > 0 and self.max_rel_error < tol


def rel_error(a: float, n: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from dominating."""
    return abs(a - n) / max(abs(a), abs(n), floor)


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradcheck(loss_fn: Callable[[], Tensor], params: Sequence[Parameter], h: float = 1e-5,
              max_coords: int | None = None, rng: np.random.Generator | None = None,
              floor: float = 1e-6) -> GradCheckResult:
    """Compare tape gradients of ``loss_fn()`` w.r.t. ``params`` against central differences.

    ``max_coords`` samples that many coordinates per parameter (all if None).
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    with branch_trace() as ref, Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst, worst_at = 0.0, None
    checked = skipped = 0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        size = flat.size
        coords = np.arange(size) if max_coords is None or max_coords >= size else rng.choice(size, max_coords, replace=False)
        for c in coords:
            v = flat[c]
            flat[c] = v + h
            with branch_trace() as bp:
                fp = float(loss_fn().data)
            flat[c] = v - h
            with branch_trace() as bm:
                fm = float(loss_fn().data)
            flat[c] = v
            if not (_same_branches(ref, bp) and _same_branches(ref, bm)):
                skipped += 1
                continue
            num = (fp - fm) / (2 * h)
            err = rel_error(float(ga.reshape(-1)[c]), num, floor)
            checked += 1
            if err > worst or worst_at is None:
                worst, worst_at = max(err, worst), (p.name or "?", np.unravel_index(c, p.shape))
    return GradCheckResult(worst, checked, skipped, worst_at)
