"""Seeded synthetic box corpora for benchmarks and property tests.

Boxes cluster around a handful of centers, and each cluster keeps a base
aspect ratio its members jitter around. Dense clusters exercise the IoU
gate; the shared per-cluster ratio exercises the similarity gate the way
tightly packed same-species detections would.
"""

import numpy as np

from .errors import ContractViolation
from .nms import DetBox


def dense_corpus(
    n: int,
    seed: int = 0,
    clusters: int = 8,
    image_size: float = 640.0,
    classes: int = 1,
):
    """``n`` boxes in ``clusters`` tight groups on one synthetic image."""
    if n < 1:
        raise ContractViolation(f"boxes: need at least one, got {n}")
    if clusters < 1:
        raise ContractViolation(f"clusters: need at least one, got {clusters}")
    rng = np.random.default_rng(seed)

    centers = rng.uniform(0.15 * image_size, 0.85 * image_size, size=(clusters, 2))
    base_ratio = np.exp(rng.normal(0.0, 0.5, size=clusters))
    base_size = rng.uniform(0.05 * image_size, 0.15 * image_size, size=clusters)

    boxes = []
    for _ in range(n):
        k = int(rng.integers(clusters))
        cx, cy = centers[k] + rng.normal(0.0, 0.02 * image_size, size=2)
        ratio = base_ratio[k] * np.exp(rng.normal(0.0, 0.08))
        size = base_size[k] * np.exp(rng.normal(0.0, 0.10))
        w = size * np.sqrt(ratio)
        h = size / np.sqrt(ratio)
        boxes.append(
            DetBox(
                x1=cx - w / 2, y1=cy - h / 2, x2=cx + w / 2, y2=cy + h / 2,
                score=float(rng.uniform(0.05, 1.0)),
                class_id=int(rng.integers(classes)) if classes > 1 else 0,
            )
        )
    return boxes


def uniform_boxes(n: int, seed: int = 0, image_size: float = 640.0, classes: int = 1):
    """Loose, mostly non-overlapping boxes (the sparse counterpart)."""
    rng = np.random.default_rng(seed)
    boxes = []
    for _ in range(n):
        w = rng.uniform(8.0, 0.3 * image_size)
        h = rng.uniform(8.0, 0.3 * image_size)
        x1 = rng.uniform(0.0, image_size - w)
        y1 = rng.uniform(0.0, image_size - h)
        boxes.append(
            DetBox(
                x1=x1, y1=y1, x2=x1 + w, y2=y1 + h,
                score=float(rng.uniform(0.05, 1.0)),
                class_id=int(rng.integers(classes)) if classes > 1 else 0,
            )
        )
    return boxes
