"""Micro-benchmark of the kernel backends.

Times the convolution hot path and a full vortex-block forward+gradient
under every importable backend (compiled extension and numpy fallback) so
the two can be compared on the machine at hand.
"""

import time
from statistics import median

import numpy as np

from . import backend
from .errors import ContractViolation
from .tensor import GradTape, Tensor, conv2d, tsum
from .vconv import amsp_vconv_forward, make_amsp_vconv_block, make_standard_block

DEFAULT_SHAPES = ((2, 8, 6, 6), (2, 16, 12, 12), (2, 32, 24, 24), (2, 64, 32, 32))


def _time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return median(times) * 1e3


def bench_kernels(reps: int = 5, shapes=DEFAULT_SHAPES, k: int = 3, seed: int = 0) -> dict:
    if reps < 3:
        raise ContractViolation(f"reps: need >= 3, got {reps}")
    rng = np.random.default_rng(seed)
    rows = []
    for shape in shapes:
        b, c, h, w = shape
        x = Tensor(rng.standard_normal(shape))
        dense_conv, _ = make_standard_block(c, k=k, seed=seed)
        block = make_amsp_vconv_block(c, k=k, g=4 if (c // 2) % 4 == 0 else 1, seed=seed)

        def conv_once():
            conv2d(x, dense_conv)

        def block_grad_once():
            GradTape(tsum(amsp_vconv_forward(x, block))).gradient(x)

        row = {"shape": list(shape), "kernel": k, "conv2d_ms": {}, "block_grad_ms": {}}
        for name in backend.available():
            with backend.use(name):
                row["conv2d_ms"][name] = _time(conv_once, reps)
                row["block_grad_ms"][name] = _time(block_grad_once, reps)
        if len(row["conv2d_ms"]) == 2:
            row["conv2d_speedup"] = row["conv2d_ms"]["python"] / row["conv2d_ms"]["compiled"]
            row["block_grad_speedup"] = (
                row["block_grad_ms"]["python"] / row["block_grad_ms"]["compiled"]
            )
        rows.append(row)
    return {
        "report": "kernel backend micro-benchmark (median of reps)",
        "reps": reps,
        "backends": list(backend.available()),
        "active_backend": backend.name(),
        "results": rows,
    }
