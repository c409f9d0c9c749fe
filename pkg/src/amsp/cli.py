"""Command-line surface.

Subcommands:

* ``nms``           suppress a JSONL box file with hard / soft / similar
* ``block``         forward, gradcheck, or params for the two blocks
* ``bench``         NMS variant benchmark over a corpus (file or synthetic)
* ``noise-probe``   perturbation-sensitivity curves for the vortex block
* ``bench-kernels`` compiled-vs-numpy kernel backend comparison

Reports go to stdout as JSON; every failure exits nonzero with a
single-line JSON object on stderr.
"""

import argparse
import json
import sys

import numpy as np

from . import backend
from .bench import bench_kernels
from .detio import detection_line, read_detections
from .errors import ContractViolation, NonFiniteError
from .fadcsp import fad_csp_forward, make_fad_csp_params
from .manifest import load_block, save_amsp_vconv, save_fad_csp
from .nms import NMSSimilarConfig, bench_nms, suppress_multiclass_indexed
from .probe import DEFAULT_LEVELS, noise_probe
from .synthetic import dense_corpus
from .tensor import Tensor, grad_check, tsum
from .tensorio import atomic_write_text, read_tensor, read_tensor_json, write_tensor
from .vconv import amsp_vconv_forward, make_amsp_vconv_block, vconv_param_count

GRADCHECK_TOL = 1e-5


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _nms_flags(p):
    p.add_argument("--variant", default="similar",
                   choices=["hard", "soft", "similar", "nms-similar"])
    p.add_argument("--nt", type=float, default=0.5, help="IoU removal threshold")
    p.add_argument("--ns", type=float, default=0.9, help="aspect-similarity threshold")
    p.add_argument("--sigma", type=float, default=0.5, help="Gaussian decay width")
    p.add_argument("--floor", type=float, default=0.001, help="score floor")
    p.add_argument("--mode", default="literal", choices=["literal", "dense-preserve"])


def _shape_flags(p):
    p.add_argument("--b", type=int, default=2)
    p.add_argument("--c", type=int, default=8)
    p.add_argument("--h", type=int, default=6)
    p.add_argument("--w", type=int, default=6)
    p.add_argument("--g", type=int, default=None, help="vortex group count")
    p.add_argument("--t", type=int, default=None, help="channels per group row")
    p.add_argument("--r", type=int, default=2, help="GFA reduction ratio")
    p.add_argument("--n", type=int, default=2, help="RepBottleneck split count")
    p.add_argument("--k", type=int, default=3, help="kernel size")


def build_parser():
    root = _Parser(prog="amsp", description=__doc__)
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nms", help="suppress a JSONL detection file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _nms_flags(p)

    p = sub.add_parser("block", help="run a block")
    p.add_argument("submode", choices=["forward", "gradcheck", "params"])
    p.add_argument("--block", default="amsp-vconv", choices=["amsp-vconv", "fad-csp"])
    _shape_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", default=None, help="input tensor container")
    p.add_argument("--output", default=None, help="output tensor container")
    p.add_argument("--weights", default=None, help="load block weights from a manifest dir")
    p.add_argument("--weights-out", default=None, help="save block weights to a manifest dir")

    p = sub.add_parser("bench", help="benchmark the NMS variants")
    p.add_argument("--input", default=None, help="JSONL corpus")
    p.add_argument("--synthetic", type=int, default=None, help="generate N dense boxes")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    _nms_flags(p)

    p = sub.add_parser("noise-probe", help="output-deviation curves under input noise")
    _shape_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=16, help="number of probe seeds to average")
    p.add_argument("--levels", default=",".join(str(v) for v in DEFAULT_LEVELS),
                   help="comma-separated noise standard deviations")
    p.add_argument("--output", default=None)

    p = sub.add_parser("bench-kernels", help="compare kernel backends")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    return root


def _config(args) -> NMSSimilarConfig:
    return NMSSimilarConfig(
        iou_threshold=args.nt,
        sim_threshold=args.ns,
        sigma=args.sigma,
        score_floor=args.floor,
        mode=args.mode.replace("-", "_"),
    )


def _variant(name: str) -> str:
    return "similar" if name == "nms-similar" else name


def _emit(report) -> None:
    print(json.dumps(report, indent=2))


def cmd_nms(args) -> int:
    cfg = _config(args)
    variant = _variant(args.variant)
    rows = read_detections(args.input)

    images: dict = {}
    for image, box in rows:
        images.setdefault(image, []).append(box)

    lines = []
    totals = {"decay_evals": 0, "hard_removals": 0, "iterations": 0, "wall_time_ms": 0.0}
    survivors = 0
    for image, boxes in images.items():
        kept, stats = suppress_multiclass_indexed(boxes, variant, cfg)
        for idx, adjusted in kept:
            lines.append(detection_line(boxes[idx], adjusted, image))
        survivors += len(kept)
        for key, val in stats.to_dict().items():
            totals[key] += val

    atomic_write_text(args.output, "".join(line + "\n" for line in lines))
    _emit({
        "variant": variant,
        "mode": cfg.mode,
        "input_boxes": len(rows),
        "images": len(images),
        "survivors": survivors,
        "stats": totals,
        "output": args.output,
    })
    return 0


def _derive_groups(args):
    c_half = args.c // 2
    if args.g is None and args.t is None:
        g = 4 if c_half % 4 == 0 else 1
    elif args.g is None:
        if c_half % args.t:
            raise ContractViolation(f"t: {args.t} must divide c/2 = {c_half}")
        g = c_half // args.t
    else:
        g = args.g
        if args.t is not None and args.t * g != c_half:
            raise ContractViolation(
                f"t: t*g must equal c/2 = {c_half}, got {args.t}*{g} = {args.t * g}"
            )
    return g


def _build_block(args):
    if args.weights:
        kind, built = load_block(args.weights)
        if kind != args.block:
            raise ContractViolation(f"weights: manifest holds {kind!r}, requested {args.block!r}")
        return built
    if args.block == "amsp-vconv":
        return make_amsp_vconv_block(args.c, k=args.k, g=_derive_groups(args), seed=args.seed)
    return make_fad_csp_params(args.c, r=args.r, n=args.n, seed=args.seed)


def _forward_fn(kind, built):
    if kind == "amsp-vconv":
        return lambda t: amsp_vconv_forward(t, built)
    return lambda t: fad_csp_forward(t, built)


def cmd_block(args) -> int:
    if args.submode == "params":
        g = _derive_groups(args)
        vconv_params, standard_params = vconv_param_count(args.c, args.k, g)
        _emit({
            "c": args.c, "k": args.k, "g": g,
            "vconv_params": vconv_params,
            "standard_params": standard_params,
            "reduction_ratio": standard_params / vconv_params,
        })
        return 0

    built = _build_block(args)
    forward = _forward_fn(args.block, built)

    if args.submode == "gradcheck":
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
        x = Tensor(rng.standard_normal((args.b, args.c, args.h, args.w)))
        err = grad_check(lambda t: tsum(forward(t)), x, eps=1e-5)
        ok = err <= GRADCHECK_TOL
        _emit({
            "block": args.block,
            "shape": [args.b, args.c, args.h, args.w],
            "max_rel_error": err,
            "tolerance": GRADCHECK_TOL,
            "pass": bool(ok),
        })
        return 0 if ok else 1

    # forward
    if args.input:
        # binary container by default; .json selects the fixture text form
        x = read_tensor_json(args.input) if args.input.endswith(".json") else read_tensor(args.input)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
        x = Tensor(rng.standard_normal((args.b, args.c, args.h, args.w)))
    out = forward(x)
    if args.weights_out:
        if args.block == "amsp-vconv":
            save_amsp_vconv(built, args.weights_out)
        else:
            save_fad_csp(built, args.seed, args.weights_out)
    if args.output:
        write_tensor(args.output, out)
    _emit({
        "block": args.block,
        "backend": backend.name(),
        "input_shape": list(x.shape),
        "output_shape": list(out.shape),
        "mean": float(out.data.mean()),
        "std": float(out.data.std()),
        "min": float(out.data.min()),
        "max": float(out.data.max()),
        "output": args.output,
        "weights_out": args.weights_out,
    })
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    if (args.input is None) == (args.synthetic is None):
        raise ContractViolation("corpus: give exactly one of --input or --synthetic")
    if args.synthetic is not None:
        if args.synthetic < 1:
            raise ContractViolation(f"synthetic: need at least one box, got {args.synthetic}")
        corpus = [dense_corpus(args.synthetic, seed=args.seed)]
        source = {"synthetic": args.synthetic, "seed": args.seed}
    else:
        images: dict = {}
        for image, box in read_detections(args.input):
            images.setdefault(image, []).append(box)
        corpus = list(images.values())
        source = {"input": args.input, "images": len(corpus)}

    results = {v: bench_nms(corpus, v, cfg, reps=args.reps) for v in ("hard", "similar", "soft")}
    ordering = {
        "time_hard_le_similar": results["hard"]["median_ms"] <= results["similar"]["median_ms"],
        "time_similar_le_soft": results["similar"]["median_ms"] <= results["soft"]["median_ms"],
        "economy_similar_le_soft": results["similar"]["decay_evals"] <= results["soft"]["decay_evals"],
    }
    ordering["time_ok"] = ordering["time_hard_le_similar"] and ordering["time_similar_le_soft"]
    _emit({
        "corpus": source,
        "config": {
            "nt": cfg.iou_threshold, "ns": cfg.sim_threshold,
            "sigma": cfg.sigma, "floor": cfg.score_floor, "mode": cfg.mode,
        },
        "variants": results,
        "ordering": ordering,
    })
    if not ordering["economy_similar_le_soft"]:
        raise ContractViolation(
            "economy: decay_evals(similar) exceeded decay_evals(soft) "
            f"({results['similar']['decay_evals']} > {results['soft']['decay_evals']})"
        )
    return 0


def cmd_noise_probe(args) -> int:
    levels = [float(v) for v in args.levels.split(",") if v.strip() != ""]
    g = _derive_groups(args)
    report = noise_probe(
        args.b, args.c, args.h, args.w,
        levels=levels, seeds=args.seeds, seed=args.seed, g=g, k=args.k,
    )
    if args.output:
        atomic_write_text(args.output, json.dumps(report, indent=2))
    _emit(report)
    return 0


def cmd_bench_kernels(args) -> int:
    _emit(bench_kernels(reps=args.reps, seed=args.seed))
    return 0


_COMMANDS = {
    "nms": cmd_nms,
    "block": cmd_block,
    "bench": cmd_bench,
    "noise-probe": cmd_noise_probe,
    "bench-kernels": cmd_bench_kernels,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except CLIError as exc:
        print(json.dumps({"error": f"usage: {exc}"}), file=sys.stderr)
        return 2
    except (ContractViolation, NonFiniteError, OSError, AssertionError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
