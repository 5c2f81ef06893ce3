"""Time the compiled conv/pool kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Also times one desk-profile training step with each backend, since that is
where the kernels matter in practice.
"""
import argparse
import json
import time

import numpy as np

from modscc._kernels import _fallback

try:
    from modscc._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

SHAPES = {
    "desk block1 (16x3x32x32)": (16, 3, 32, 32),
    "desk block2 (16x16x16x16)": (16, 16, 16, 16),
    "full-width slice (4x64x64x64)": (4, 64, 64, 64),
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_impl(impl, shape, repeat):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape).astype(np.float32)
    N, C, H, W = shape
    cols = impl.im2col3x3(x)
    pooled, idx = impl.maxpool2_forward(x)
    return {
        "im2col": best_of(lambda: impl.im2col3x3(x), repeat),
        "col2im": best_of(lambda: impl.col2im3x3(cols, H, W), repeat),
        "maxpool_fwd": best_of(lambda: impl.maxpool2_forward(x), repeat),
        "maxpool_bwd": best_of(lambda: impl.maxpool2_backward(pooled, idx), repeat),
    }


def bench_train_step(backend, repeat):
    """One forward+backward+Adamax step of the desk model, with kernels swapped in place."""
    import modscc._kernels as K
    from modscc import BackboneConfig, HeadConfig, MoDsCC, MO_DSCC_WEIGHTS, Tape
    from modscc.trainer import Adamax

    saved = K._impl
    K._impl = _ckernels if backend == "cython" else _fallback
    try:
        model = MoDsCC(BackboneConfig.desk(), HeadConfig(4, 6, task_dense_width=32), MO_DSCC_WEIGHTS)
        opt = Adamax(model.store.params)
        rng = np.random.default_rng(0)
        x = rng.random((16, 3, 32, 32)).astype(np.float32)
        truth = model.make_truth(rng.integers(0, 4, 16), rng.integers(0, 6, 16))

        def step():
            with Tape() as tape:
                loss, _ = model.loss(model.outputs(x, training=True), truth)
            tape.backward(loss)
            opt.step()

        return best_of(step, repeat)
    finally:
        K._impl = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels are not built; only the fallback can be timed")
    results = {}
    print(f"{'shape':<32} {'kernel':<12} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for label, shape in SHAPES.items():
        py = bench_impl(_fallback, shape, args.repeat)
        cy = bench_impl(_ckernels, shape, args.repeat) if _ckernels else {}
        for k, t in py.items():
            c = cy.get(k)
            speed = f"{t / c:8.2f}" if c else "       -"
            cms = f"{c * 1e3:10.3f}" if c else "         -"
            print(f"{label:<32} {k:<12} {t * 1e3:10.3f} {cms} {speed}")
        results[label] = {"python": py, "cython": cy}
    step_py = bench_train_step("python", max(args.repeat // 4, 3))
    line = f"{'desk train step (batch 16)':<32} {'total':<12} {step_py * 1e3:10.3f}"
    results["train_step"] = {"python": step_py}
    if _ckernels:
        step_cy = bench_train_step("cython", max(args.repeat // 4, 3))
        results["train_step"]["cython"] = step_cy
        line += f" {step_cy * 1e3:10.3f} {step_py / step_cy:8.2f}"
    print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main()
