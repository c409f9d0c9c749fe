"""Perturbation-sensitivity probe.

Measures how strongly a block's output moves when seeded Gaussian noise of
growing standard deviation is added to its input:

    deviation(level) = ||f(x + level * d) - f(x)|| / ||f(x)||

with one noise direction ``d`` per probe seed, shared across levels so each
seed traces a ray. Curves are averaged over seeds for the vortex block and
its dense standard-conv counterpart. This is a property study of output
sensitivity; it says nothing about detection accuracy.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import backend
from .errors import ContractViolation
from .tensor import Tensor
from .vconv import (
    amsp_vconv_forward,
    make_amsp_vconv_block,
    make_standard_block,
    standard_forward,
)

DEFAULT_LEVELS = tuple(float(v) for v in range(11))


def thread_cap() -> int:
    """Parallelism cap from AMSP_THREADS; defaults to sequential."""
    raw = os.environ.get("AMSP_THREADS", "").strip()
    if not raw:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise ContractViolation(f"AMSP_THREADS: expected an integer, got {raw!r}") from None
    return max(1, cap)


def _seed_curves(blocks, shape, levels, root_seed, index):
    rng = np.random.default_rng(np.random.SeedSequence([root_seed, index]))
    x = rng.standard_normal(shape)
    direction = rng.standard_normal(shape)
    curves = {}
    for name, forward in blocks.items():
        base = forward(Tensor(x)).data
        norm0 = float(np.linalg.norm(base))
        devs = []
        for level in levels:
            if level == 0.0:
                devs.append(0.0)
                continue
            moved = forward(Tensor(x + level * direction)).data
            devs.append(float(np.linalg.norm(moved - base)) / norm0)
        curves[name] = devs
    return curves


def noise_probe(
    b: int,
    c: int,
    h: int,
    w: int,
    levels=DEFAULT_LEVELS,
    seeds: int = 16,
    seed: int = 0,
    g: int = 4,
    k: int = 3,
) -> dict:
    levels = [float(v) for v in levels]
    if any(v < 0 for v in levels):
        raise ContractViolation(f"levels: noise levels must be >= 0, got {levels}")
    if not levels:
        raise ContractViolation("levels: need at least one noise level")
    if seeds < 1:
        raise ContractViolation(f"seeds: need at least one probe seed, got {seeds}")

    vortex = make_amsp_vconv_block(c, k=k, g=g, seed=seed)
    standard = make_standard_block(c, k=k, seed=seed)
    blocks = {
        "amsp_vconv": lambda t: amsp_vconv_forward(t, vortex),
        "standard_conv": lambda t: standard_forward(t, standard),
    }
    shape = (b, c, h, w)

    workers = min(thread_cap(), seeds)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(lambda i: _seed_curves(blocks, shape, levels, seed, i), range(seeds)))
    else:
        per_seed = [_seed_curves(blocks, shape, levels, seed, i) for i in range(seeds)]

    curves = {
        name: [float(np.mean([ps[name][j] for ps in per_seed])) for j in range(len(levels))]
        for name in blocks
    }
    return {
        "report": "perturbation-sensitivity property study (output deviation, not detection accuracy)",
        "shape": list(shape),
        "kernel": k,
        "groups": g,
        "levels": levels,
        "seeds": seeds,
        "seed": seed,
        "backend": backend.name(),
        "curves": curves,
    }
