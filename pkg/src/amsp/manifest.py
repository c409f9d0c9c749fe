"""Block weight serialization: tensor containers plus a JSON manifest.

A block saves into a directory: one ``.amspt`` container per weight array
(rank-1 arrays are stored as (1, c, 1, 1)) and a ``manifest.json`` that
records layer roles, hyperparameters, the seed, and the explicit
permutation, so a run can be replayed elsewhere from the files alone.
"""

import json
import os

import numpy as np

from .errors import ContractViolation
from .fadcsp import (
    BottleneckParams,
    FADCSPParams,
    GFAParams,
    RepBottleneckParams,
)
from .tensor import BNParams, ConvParams
from .tensorio import atomic_write_text, read_tensor, write_tensor
from .vconv import AMSPConfig, AMSPVConvBlock, VConvParams

FORMAT = "amsp-block/1"


def _write_array(dirpath, name, arr) -> str:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1, 1, 1)
    fname = f"{name}.amspt"
    write_tensor(os.path.join(dirpath, fname), arr)
    return fname


def _read_array(dirpath, fname, rank: int):
    data = read_tensor(os.path.join(dirpath, fname)).data
    return data.reshape(data.shape[1]) if rank == 1 else data


def _conv_entry(dirpath, name, p: ConvParams, role: str) -> dict:
    entry = {
        "role": role,
        "stride": p.stride,
        "padding": p.padding,
        "groups": p.groups,
        "weights": _write_array(dirpath, f"{name}.weights", p.weights),
        "bias": _write_array(dirpath, f"{name}.bias", p.bias) if p.bias is not None else None,
    }
    return entry


def _conv_load(dirpath, entry) -> ConvParams:
    return ConvParams(
        weights=_read_array(dirpath, entry["weights"], rank=4),
        bias=_read_array(dirpath, entry["bias"], rank=1) if entry["bias"] else None,
        stride=entry["stride"],
        padding=entry["padding"],
        groups=entry["groups"],
    )


def _bn_entry(dirpath, name, p: BNParams, role: str) -> dict:
    return {
        "role": role,
        "eps": p.eps,
        "gamma": _write_array(dirpath, f"{name}.gamma", p.gamma),
        "beta": _write_array(dirpath, f"{name}.beta", p.beta),
        "mean": _write_array(dirpath, f"{name}.mean", p.running_mean),
        "var": _write_array(dirpath, f"{name}.var", p.running_var),
    }


def _bn_load(dirpath, entry) -> BNParams:
    return BNParams(
        gamma=_read_array(dirpath, entry["gamma"], rank=1),
        beta=_read_array(dirpath, entry["beta"], rank=1),
        running_mean=_read_array(dirpath, entry["mean"], rank=1),
        running_var=_read_array(dirpath, entry["var"], rank=1),
        eps=entry["eps"],
    )


def save_amsp_vconv(block: AMSPVConvBlock, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    manifest = {
        "format": FORMAT,
        "block": "amsp-vconv",
        "seed": block.amsp.seed,
        "channels": block.channels,
        "group_width": block.amsp.group_width,
        "permutation": list(block.amsp.permutation),
        "conv": {
            "entry": _conv_entry(dirpath, "entry.conv", block.entry_conv, "entry CBS halving conv"),
        },
        "bn": {
            "entry": _bn_entry(dirpath, "entry.bn", block.entry_bn, "entry CBS batch norm"),
            "post": _bn_entry(dirpath, "vortex.bn", block.vconv.post_bn, "post-vortex batch norm"),
        },
        "vortex": {
            "role": "shared group kernel",
            "groups": block.vconv.groups,
            "stride": block.vconv.stride,
            "padding": block.vconv.padding,
            "kernel": _write_array(dirpath, "vortex.kernel", block.vconv.shared_kernel),
        },
    }
    atomic_write_text(os.path.join(dirpath, "manifest.json"), json.dumps(manifest, indent=2))


def save_fad_csp(params: FADCSPParams, seed, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    gfa = params.gfa
    manifest = {
        "format": FORMAT,
        "block": "fad-csp",
        "seed": seed,
        "channels": params.channels,
        "reduction": gfa.reduction,
        "splits": params.rep.n,
        "group_width": gfa.amsp.group_width,
        "permutation": list(gfa.amsp.permutation),
        "conv": {
            "gfa.fuse": _conv_entry(dirpath, "gfa.fuse.conv", gfa.fuse_conv, "GFA strip fuse conv"),
            "gfa.branch_h": _conv_entry(dirpath, "gfa.branch_h", gfa.branch_h, "GFA height branch conv"),
            "gfa.branch_w": _conv_entry(dirpath, "gfa.branch_w", gfa.branch_w, "GFA width branch conv"),
            "out": _conv_entry(dirpath, "out.conv", params.out_conv, "cross-stage fuse conv"),
        },
        "bn": {
            "gfa.fuse": _bn_entry(dirpath, "gfa.fuse.bn", gfa.fuse_bn, "GFA fuse batch norm"),
            "out": _bn_entry(dirpath, "out.bn", params.out_bn, "cross-stage fuse batch norm"),
        },
        "bottlenecks": [
            {
                "pw": _conv_entry(dirpath, f"rep.{i}.pw.conv", b.pw_conv, f"bottleneck {i} pointwise conv"),
                "pw_bn": _bn_entry(dirpath, f"rep.{i}.pw.bn", b.pw_bn, f"bottleneck {i} pointwise batch norm"),
                "dw": _conv_entry(dirpath, f"rep.{i}.dw.conv", b.dw_conv, f"bottleneck {i} depthwise conv"),
                "dw_bn": _bn_entry(dirpath, f"rep.{i}.dw.bn", b.dw_bn, f"bottleneck {i} depthwise batch norm"),
            }
            for i, b in enumerate(params.rep.bottlenecks)
        ],
    }
    atomic_write_text(os.path.join(dirpath, "manifest.json"), json.dumps(manifest, indent=2))


def load_block(dirpath):
    """Rebuild a saved block; returns ('amsp-vconv', AMSPVConvBlock) or ('fad-csp', FADCSPParams)."""
    with open(os.path.join(dirpath, "manifest.json"), "r", encoding="utf-8") as fh:
        m = json.load(fh)
    if m.get("format") != FORMAT:
        raise ContractViolation(f"format: expected {FORMAT}, got {m.get('format')!r}")

    if m["block"] == "amsp-vconv":
        v = m["vortex"]
        block = AMSPVConvBlock(
            entry_conv=_conv_load(dirpath, m["conv"]["entry"]),
            entry_bn=_bn_load(dirpath, m["bn"]["entry"]),
            amsp=AMSPConfig(
                group_width=m["group_width"],
                permutation=tuple(m["permutation"]),
                seed=m["seed"],
            ),
            vconv=VConvParams(
                shared_kernel=_read_array(dirpath, v["kernel"], rank=4),
                groups=v["groups"],
                post_bn=_bn_load(dirpath, m["bn"]["post"]),
                stride=v["stride"],
                padding=v["padding"],
            ),
        )
        return "amsp-vconv", block

    if m["block"] == "fad-csp":
        gfa = GFAParams(
            reduction=m["reduction"],
            fuse_conv=_conv_load(dirpath, m["conv"]["gfa.fuse"]),
            fuse_bn=_bn_load(dirpath, m["bn"]["gfa.fuse"]),
            branch_h=_conv_load(dirpath, m["conv"]["gfa.branch_h"]),
            branch_w=_conv_load(dirpath, m["conv"]["gfa.branch_w"]),
            amsp=AMSPConfig(
                group_width=m["group_width"],
                permutation=tuple(m["permutation"]),
                seed=m["seed"],
            ),
        )
        rep = RepBottleneckParams(
            bottlenecks=tuple(
                BottleneckParams(
                    pw_conv=_conv_load(dirpath, b["pw"]),
                    pw_bn=_bn_load(dirpath, b["pw_bn"]),
                    dw_conv=_conv_load(dirpath, b["dw"]),
                    dw_bn=_bn_load(dirpath, b["dw_bn"]),
                )
                for b in m["bottlenecks"]
            )
        )
        params = FADCSPParams(
            gfa=gfa,
            rep=rep,
            out_conv=_conv_load(dirpath, m["conv"]["out"]),
            out_bn=_bn_load(dirpath, m["bn"]["out"]),
        )
        return "fad-csp", params

    raise ContractViolation(f"block: unknown block kind {m['block']!r}")
