"""Detection post-processing: hard NMS, Gaussian soft NMS, and NMS-Similar.

All three variants share one greedy loop: pick the highest-scoring live box
as the pivot (ties go to the lower original index), update the rest against
it, drop anything whose score falls under the floor, repeat. They differ
only in the per-pivot update:

* hard     - remove boxes with IoU above the threshold, scores untouched
* soft     - Gaussian-decay every remaining box's score by its IoU
* similar  - gate removal/decay on IoU and on the cosine similarity of the
             (width, height) vectors; two readings of the gate exist and
             both are implemented (``literal`` and ``dense_preserve``)

Every Gaussian decay application and every hard removal is counted, which
is what the suppression-economy and benchmark reports are built on.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from statistics import median

import numpy as np

from .errors import ContractViolation

VARIANTS = ("hard", "soft", "similar")
MODES = ("literal", "dense_preserve")


@dataclass(frozen=True)
class DetBox:
    """Corner-form box with a confidence score and class id."""

    x1: float
    y1: float
    x2: float
    y2: float
    score: float
    class_id: int = 0

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2", "score"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ContractViolation(f"{name}: must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if not self.x2 > self.x1:
            raise ContractViolation(f"x2: must exceed x1 ({self.x1} >= {self.x2})")
        if not self.y2 > self.y1:
            raise ContractViolation(f"y2: must exceed y1 ({self.y1} >= {self.y2})")
        if not 0.0 <= self.score <= 1.0:
            raise ContractViolation(f"score: must be in [0, 1], got {self.score}")
        if int(self.class_id) != self.class_id or self.class_id < 0:
            raise ContractViolation(f"class_id: must be a non-negative integer, got {self.class_id}")
        object.__setattr__(self, "class_id", int(self.class_id))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class NMSSimilarConfig:
    iou_threshold: float = 0.5
    sim_threshold: float = 0.9
    sigma: float = 0.5
    score_floor: float = 0.001
    mode: str = "literal"

    def __post_init__(self):
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ContractViolation(f"iou_threshold: must be in [0, 1], got {self.iou_threshold}")
        if self.sigma <= 0:
            raise ContractViolation(f"sigma: must be > 0, got {self.sigma}")
        if self.score_floor < 0:
            raise ContractViolation(f"score_floor: must be >= 0, got {self.score_floor}")
        if self.mode not in MODES:
            raise ContractViolation(f"mode: must be one of {MODES}, got {self.mode!r}")


@dataclass
class SuppressionStats:
    decay_evals: int = 0
    hard_removals: int = 0
    iterations: int = 0
    wall_time: float = 0.0

    def __add__(self, other: "SuppressionStats") -> "SuppressionStats":
        return SuppressionStats(
            decay_evals=self.decay_evals + other.decay_evals,
            hard_removals=self.hard_removals + other.hard_removals,
            iterations=self.iterations + other.iterations,
            wall_time=self.wall_time + other.wall_time,
        )

    def to_dict(self) -> dict:
        return {
            "decay_evals": self.decay_evals,
            "hard_removals": self.hard_removals,
            "iterations": self.iterations,
            "wall_time_ms": self.wall_time * 1e3,
        }


def iou(a: DetBox, b: DetBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def aspect_sim(m: DetBox, b: DetBox) -> float:
    """Cosine similarity of the (width, height) vectors; in (0, 1]."""
    dot = m.width * b.width + m.height * b.height
    return float(dot / (np.hypot(m.width, m.height) * np.hypot(b.width, b.height)))


def gaussian_decay(score: float, iou_val: float, sigma: float) -> float:
    """score * exp(-iou^2 / sigma); the unit the economy claim counts."""
    if sigma <= 0:
        raise ContractViolation(f"sigma: must be > 0, got {sigma}")
    if not 0.0 <= iou_val <= 1.0:
        raise ContractViolation(f"iou: must be in [0, 1], got {iou_val}")
    return score * float(np.exp(-(iou_val * iou_val) / sigma))


# ---------------------------------------------------------------------------
# greedy engine
# ---------------------------------------------------------------------------


def _to_arrays(boxes):
    coords = np.array([(b.x1, b.y1, b.x2, b.y2) for b in boxes], dtype=np.float64)
    scores = np.array([b.score for b in boxes], dtype=np.float64)
    return coords, scores


def _iou_row(coords, area, p, idx):
    iw = np.minimum(coords[p, 2], coords[idx, 2]) - np.maximum(coords[p, 0], coords[idx, 0])
    ih = np.minimum(coords[p, 3], coords[idx, 3]) - np.maximum(coords[p, 1], coords[idx, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    return inter / (area[p] + area[idx] - inter)

def _sim_row(coords, p, idx):
    w = coords[idx, 2] - coords[idx, 0]
    h = coords[idx, 3] - coords[idx, 1]
    wp = coords[p, 2] - coords[p, 0]
    hp = coords[p, 3] - coords[p, 1]
    return (wp * w + hp * h) / (np.hypot(wp, hp) * np.hypot(w, h))


def suppress_indexed(boxes, variant: str, cfg: NMSSimilarConfig):
    """Greedy suppression returning (kept (index, score) pairs, stats).

    Indices refer to positions in ``boxes``; pairs come out in pivot order,
    which is descending current-score order with ties broken by the lower
    index.
    """
    if variant not in VARIANTS:
        raise ContractViolation(f"variant: must be one of {VARIANTS}, got {variant!r}")
    stats = SuppressionStats()
    if not boxes:
        return [], stats

    t0 = time.perf_counter()
    coords, scores = _to_arrays(boxes)
    area = (coords[:, 2] - coords[:, 0]) * (coords[:, 3] - coords[:, 1])
    s = scores.copy()
    alive = s >= cfg.score_floor
    kept = []

    while alive.any():
        stats.iterations += 1
        masked = np.where(alive, s, -np.inf)
        p = int(np.argmax(masked))  # first max wins: lower index on ties
        alive[p] = False
        kept.append((p, float(s[p])))

        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        ious = _iou_row(coords, area, p, idx)

        if variant == "hard":
            removed = ious > cfg.iou_threshold
            stats.hard_removals += int(removed.sum())
            alive[idx[removed]] = False
            continue

        if variant == "soft":
            s[idx] = s[idx] * np.exp(-(ious * ious) / cfg.sigma)
            stats.decay_evals += idx.size
            alive[idx[s[idx] < cfg.score_floor]] = False
            continue

        sims = _sim_row(coords, p, idx)
        if cfg.mode == "literal":
            removed = ious > cfg.iou_threshold
            decayed = ~removed & (sims > cfg.sim_threshold)
        else:  # dense_preserve
            over = ious > cfg.iou_threshold
            removed = over & (sims <= cfg.sim_threshold)
            decayed = over & (sims > cfg.sim_threshold)
        stats.hard_removals += int(removed.sum())
        stats.decay_evals += int(decayed.sum())
        alive[idx[removed]] = False
        di = idx[decayed]
        s[di] = s[di] * np.exp(-(ious[decayed] * ious[decayed]) / cfg.sigma)
        alive[di[s[di] < cfg.score_floor]] = False

    stats.wall_time = time.perf_counter() - t0
    return kept, stats


def _rebuild(boxes, kept):
    return [dataclasses.replace(boxes[i], score=sc) for i, sc in kept]


def nms_hard(boxes, n_t: float = 0.5, score_floor: float = 0.001):
    """Classic greedy NMS; survivors keep their original scores."""
    cfg = NMSSimilarConfig(iou_threshold=n_t, score_floor=score_floor)
    kept, _ = suppress_indexed(boxes, "hard", cfg)
    return _rebuild(boxes, kept)


def soft_nms(boxes, sigma: float = 0.5, score_floor: float = 0.001):
    """Gaussian soft NMS; survivors carry decayed scores."""
    cfg = NMSSimilarConfig(sigma=sigma, score_floor=score_floor)
    kept, _ = suppress_indexed(boxes, "soft", cfg)
    return _rebuild(boxes, kept)


def nms_similar(boxes, cfg: NMSSimilarConfig | None = None):
    """Aspect-ratio-gated suppression; returns (survivors, stats)."""
    cfg = cfg or NMSSimilarConfig()
    kept, stats = suppress_indexed(boxes, "similar", cfg)
    return _rebuild(boxes, kept), stats


def suppress_multiclass(boxes, variant: str, cfg: NMSSimilarConfig | None = None):
    """Per-class suppression; classes never interact.

    Returns the merged survivors sorted by (current) score descending, ties
    by original input order.
    """
    kept, _ = suppress_multiclass_indexed(boxes, variant, cfg)
    return _rebuild(boxes, kept)


def suppress_multiclass_indexed(boxes, variant: str, cfg: NMSSimilarConfig | None = None):
    cfg = cfg or NMSSimilarConfig()
    if variant not in VARIANTS:
        raise ContractViolation(f"variant: must be one of {VARIANTS}, got {variant!r}")
    by_class: dict = {}
    for i, b in enumerate(boxes):
        by_class.setdefault(b.class_id, []).append(i)

    merged = []
    total = SuppressionStats()
    for cls in sorted(by_class):
        idxs = by_class[cls]
        kept, stats = suppress_indexed([boxes[i] for i in idxs], variant, cfg)
        merged.extend((idxs[i], sc) for i, sc in kept)
        total = total + stats
    merged.sort(key=lambda pair: (-pair[1], pair[0]))
    return merged, total


# ---------------------------------------------------------------------------
# benchmarking
# ---------------------------------------------------------------------------


def bench_nms(corpus, variant: str, cfg: NMSSimilarConfig | None = None, reps: int = 10) -> dict:
    """Median wall time and counters for one variant over a corpus of images.

    ``corpus`` is a list of box lists. Survivor sets must be identical
    across reps (the engine is deterministic); a mismatch raises.
    """
    cfg = cfg or NMSSimilarConfig()
    if reps < 3:
        raise ContractViolation(f"reps: need >= 3, got {reps}")
    if not corpus or all(len(img) == 0 for img in corpus):
        raise ContractViolation("corpus: empty benchmark corpus")

    times = []
    reference = None
    for _ in range(reps):
        total = SuppressionStats()
        survivors = []
        t0 = time.perf_counter()
        for image in corpus:
            kept, stats = suppress_multiclass_indexed(image, variant, cfg)
            total = total + stats
            survivors.append(kept)
        times.append(time.perf_counter() - t0)
        if reference is None:
            reference = survivors
        elif survivors != reference:
            raise AssertionError("bench_nms: survivor sets changed between reps")

    return {
        "variant": variant,
        "reps": reps,
        "median_ms": median(times) * 1e3,
        "decay_evals": total.decay_evals,
        "removals": total.hard_removals,
        "survivors": sum(len(k) for k in reference),
    }
