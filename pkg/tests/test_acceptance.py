"""Acceptance criteria, one test per criterion.

Each test prints a single ``[acceptance] ... PASS/FAIL`` line (visible with
``pytest -s`` or in failure output) and asserts the criterion at its stated
tolerance. Criteria are property-based plus the two desk-scale quantitative
claims (parameter counts, suppression counters/timing ordering); detection
accuracy is out of reach without trained models and is not asserted.
"""

import numpy as np
import pytest

from amsp.fadcsp import (
    fad_csp_forward,
    gfa_apply,
    gfa_attention,
    make_fad_csp_params,
    make_rep_bottleneck_params,
    rep_bottleneck_forward,
)
from amsp.nms import NMSSimilarConfig, bench_nms, suppress_indexed
from amsp.probe import noise_probe
from amsp.synthetic import dense_corpus, uniform_boxes
from amsp.tensor import Tensor, cbs, grad_check, tsum
from amsp.vconv import (
    AMSPConfig,
    amsp_permute,
    amsp_vconv_forward,
    make_amsp_vconv_block,
    vconv_param_count,
)

GRAD_TOL = 1e-5
SCORE_TOL = 1e-12


def report(criterion, failures):
    ok = not failures
    print(f"[acceptance] {criterion}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"{criterion}: {failures[:5]}"


@pytest.fixture(scope="module")
def random_box_sets():
    """1000 randomized same-class sets, sizes 1-200, mixed densities."""
    sets = []
    rng = np.random.default_rng(2024)
    for i in range(1000):
        n = int(rng.integers(1, 201))
        if i % 3 == 0:
            sets.append(uniform_boxes(n, seed=i))
        elif i % 3 == 1:
            sets.append(dense_corpus(n, seed=i, clusters=max(1, n // 25)))
        else:
            half = max(1, n // 2)
            sets.append(dense_corpus(half, seed=i) + uniform_boxes(n - half + 1, seed=i + 7)[: n - half])
    return sets


def test_criterion_1_nms_degenerate_equivalences(random_box_sets):
    failures = []
    hard_gate = NMSSimilarConfig(iou_threshold=0.5, sim_threshold=1.0)
    soft_gate = NMSSimilarConfig(iou_threshold=1.0, sim_threshold=0.0)
    plain = NMSSimilarConfig()
    for i, boxes in enumerate(random_box_sets):
        sim_a, _ = suppress_indexed(boxes, "similar", hard_gate)
        hard, _ = suppress_indexed(boxes, "hard", NMSSimilarConfig(iou_threshold=0.5))
        if [k for k, _ in sim_a] != [k for k, _ in hard] or any(
            abs(a - b) > SCORE_TOL for (_, a), (_, b) in zip(sim_a, hard)
        ):
            failures.append(("hard-gate", i))
        sim_b, _ = suppress_indexed(boxes, "similar", soft_gate)
        soft, _ = suppress_indexed(boxes, "soft", plain)
        if [k for k, _ in sim_b] != [k for k, _ in soft] or any(
            abs(a - b) > SCORE_TOL for (_, a), (_, b) in zip(sim_b, soft)
        ):
            failures.append(("soft-gate", i))
    report("criterion 1 (NMS degenerate equivalences, 1000 random sets)", failures)


def test_criterion_2_suppression_economy(random_box_sets):
    failures = []
    for mode in ("literal", "dense_preserve"):
        cfg = NMSSimilarConfig(mode=mode)
        for i, boxes in enumerate(random_box_sets):
            _, sim_stats = suppress_indexed(boxes, "similar", cfg)
            _, soft_stats = suppress_indexed(boxes, "soft", cfg)
            if sim_stats.decay_evals > soft_stats.decay_evals:
                failures.append((mode, i, sim_stats.decay_evals, soft_stats.decay_evals))
    dense = dense_corpus(2000, seed=77)
    _, sim_stats = suppress_indexed(dense, "similar", NMSSimilarConfig())
    _, soft_stats = suppress_indexed(dense, "soft", NMSSimilarConfig())
    if not sim_stats.decay_evals < soft_stats.decay_evals:
        failures.append(("dense-strict", sim_stats.decay_evals, soft_stats.decay_evals))
    report("criterion 2 (suppression economy vs soft-NMS)", failures)


def test_criterion_3_timing_ordering():
    corpus = [dense_corpus(2000, seed=5)]
    medians = {
        v: bench_nms(corpus, v, NMSSimilarConfig(), reps=10)["median_ms"]
        for v in ("hard", "similar", "soft")
    }
    failures = []
    if not medians["hard"] <= medians["similar"]:
        failures.append(("hard<=similar", medians))
    if not medians["similar"] <= medians["soft"]:
        failures.append(("similar<=soft", medians))
    report("criterion 3 (median wall-time ordering hard <= similar <= soft)", failures)


def test_criterion_4_gradient_correctness():
    x = Tensor(np.random.default_rng(42).standard_normal((2, 8, 6, 6)))
    block = make_amsp_vconv_block(8, seed=1)
    fad = make_fad_csp_params(8, seed=2)
    rep = make_rep_bottleneck_params(8, n=2, seed=3)
    targets = {
        "amsp_vconv_forward": lambda t: tsum(amsp_vconv_forward(t, block)),
        "gfa_attention+gfa_apply": lambda t: tsum(gfa_apply(gfa_attention(t, fad.gfa), t)),
        "rep_bottleneck_forward": lambda t: tsum(rep_bottleneck_forward(t, rep)),
        "fad_csp_forward": lambda t: tsum(fad_csp_forward(t, fad)),
    }
    failures = []
    for name, f in targets.items():
        err = grad_check(f, x, eps=1e-5)
        if err > GRAD_TOL:
            failures.append((name, err))
    report("criterion 4 (grad_check <= 1e-5 at (2, 8, 6, 6))", failures)


def test_criterion_5_shape_and_residual_contracts():
    failures = []
    rng = np.random.default_rng(7)
    for c in (8, 16, 32):
        block = make_amsp_vconv_block(c, seed=c)
        fad = make_fad_csp_params(c, seed=c + 1)
        for _ in range(4):
            h = int(rng.integers(4, 17))
            w = int(rng.integers(4, 17))
            x = Tensor(rng.standard_normal((2, c, h, w)))
            out = amsp_vconv_forward(x, block)
            if out.shape != (2, c, h, w):
                failures.append(("vconv-shape", c, h, w, out.shape))
            branch = cbs(x, block.entry_conv, block.entry_bn)
            if not np.array_equal(out.data[:, : c // 2], branch.data):
                failures.append(("residual", c, h, w))
            fout = fad_csp_forward(x, fad)
            if fout.shape != (2, c, h, w):
                failures.append(("fad-shape", c, h, w, fout.shape))
    report("criterion 5 (shape preservation and bit-exact residual half)", failures)


def test_criterion_6_permutation_properties():
    failures = []
    for m in range(1, 17):  # the permuted channel width (c/2 in the block)
        for t in (t for t in range(1, m + 1) if m % t == 0):
            g = m // t
            perms = [tuple(range(g)), tuple(reversed(range(g)))]
            perms += [tuple(np.random.default_rng(s).permutation(g)) for s in (0, 1)]
            for perm in perms:
                cfg = AMSPConfig(group_width=t, permutation=perm)
                x = Tensor(np.random.default_rng(m * 31 + t).standard_normal((2, m, 3, 4)))
                out = amsp_permute(x, cfg)
                back = amsp_permute(out, cfg.inverse())
                if not np.array_equal(back.data, x.data):
                    failures.append(("inverse", m, t, perm))
                before = np.sort(x.data.mean(axis=(0, 2, 3)))
                after = np.sort(out.data.mean(axis=(0, 2, 3)))
                if not np.array_equal(before, after):
                    failures.append(("multiset", m, t, perm))
    report("criterion 6 (permutation multiset + inverse identity, c/2 <= 16)", failures)


def test_criterion_7_parameter_reduction():
    failures = []
    grid = [(4, 1, 1), (4, 3, 2), (8, 3, 4), (16, 3, 4), (16, 5, 8), (32, 3, 4),
            (32, 7, 16), (64, 3, 4), (64, 1, 32), (128, 3, 4)]
    for c, k, g in grid:
        formula_v, formula_s = vconv_param_count(c, k, g)
        block = make_amsp_vconv_block(c, k=k, g=g, seed=0)
        counted = block.weight_element_count()
        if counted != formula_v:
            failures.append(("count-vs-formula", c, k, g, counted, formula_v))
        if not formula_v < formula_s:
            failures.append(("reduction", c, k, g))
    if vconv_param_count(64, 3, 4) != (19008, 36864):
        failures.append(("reference-pair", vconv_param_count(64, 3, 4)))
    report("criterion 7 (parameter reduction, formula == counted weights)", failures)


def test_criterion_8_noise_probe_sanity():
    failures = []
    kwargs = dict(levels=tuple(float(v) for v in range(11)), seeds=16, seed=3)
    first = noise_probe(2, 8, 6, 6, **kwargs)
    second = noise_probe(2, 8, 6, 6, **kwargs)
    if first != second:
        failures.append("nondeterministic-report")
    for name, curve in first["curves"].items():
        if curve[0] != 0.0:
            failures.append((name, "level-0 deviation", curve[0]))
        if not np.all(np.diff(curve) >= -1e-12):
            failures.append((name, "non-monotone", curve))
    report("criterion 8 (noise probe: zero at 0, monotone averaged curves)", failures)
