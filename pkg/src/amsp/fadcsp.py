"""FAD-CSP block: global strip-pooling attention fused with RepBottlenecks.

Two paths read the same input. The global feature-aware (GFA) path pools the
map into h- and w-strips, permutes and compresses them, re-expands per axis,
and gates the input with a sigmoid outer-product attention map. The local
path splits channels into n groups, runs a pointwise+depthwise residual
bottleneck per group, and sums the groups. A final CBS fuses the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .tensor import (
    BNParams,
    ConvParams,
    Tensor,
    activation,
    add,
    cbs,
    concat_channels,
    concat_rows,
    conv2d,
    mul,
    outer_hw,
    split_channels,
    split_rows,
    strip_pools,
    transpose_hw,
)
from .vconv import AMSPConfig, amsp_permute


@dataclass(frozen=True)
class GFAParams:
    """Strip-attention parameters: fuse CBS (c -> c/r) and two branch convs."""

    reduction: int
    fuse_conv: ConvParams
    fuse_bn: BNParams
    branch_h: ConvParams
    branch_w: ConvParams
    amsp: AMSPConfig

    def __post_init__(self):
        c = self.channels
        if c % self.reduction:
            raise ContractViolation(f"reduction: {self.reduction} must divide c={c}")
        if self.fuse_conv.out_channels * self.reduction != c:
            raise ContractViolation(
                f"fuse_conv: maps {c} -> {self.fuse_conv.out_channels}, expected c/r = {c // self.reduction}"
            )
        for name, branch in (("branch_h", self.branch_h), ("branch_w", self.branch_w)):
            if branch.in_channels_per_group * branch.groups != c // self.reduction:
                raise ContractViolation(f"{name}: input width must be c/r = {c // self.reduction}")
            if branch.out_channels != c:
                raise ContractViolation(f"{name}: output width must restore c = {c}")
        if self.amsp.channels != c:
            raise ContractViolation(
                f"amsp: covers {self.amsp.channels} channels, fuse input has {c}"
            )

    @property
    def channels(self) -> int:
        return self.fuse_conv.in_channels_per_group * self.fuse_conv.groups


def gfa_attention(f_in: Tensor, p: GFAParams) -> Tensor:
    """Attention map in (0, 1) with the input's shape.

    Pipeline: strip pools -> spatial concat of the two strips -> AMSP
    permute -> fuse CBS down to c/r -> split back into h- and w-strips ->
    per-axis 1x1 conv up to c -> sigmoid of the per-channel outer product.
    """
    b, c, h, w = f_in.shape
    if c != p.channels:
        raise ContractViolation(f"channels: params built for {p.channels}, input has {c}")
    v_h, v_w = strip_pools(f_in)
    fused = concat_rows([v_h, transpose_hw(v_w)])  # (b, c, h+w, 1)
    y_f = cbs(amsp_permute(fused, p.amsp), p.fuse_conv, p.fuse_bn)
    y_h, y_w = split_rows(y_f, [h, w])
    col = conv2d(y_h, p.branch_h)  # (b, c, h, 1)
    row = conv2d(y_w, p.branch_w)  # (b, c, w, 1)
    return activation(outer_hw(col, row), "sigmoid")


def gfa_apply(a_f: Tensor, f_in: Tensor) -> Tensor:
    """Gate the input with the attention map (elementwise product)."""
    if a_f.shape != f_in.shape:
        raise ContractViolation(f"shape: attention {a_f.shape} vs input {f_in.shape}")
    return mul(a_f, f_in)


@dataclass(frozen=True)
class BottleneckParams:
    """Pointwise then depthwise conv, each CBS-wrapped, plus the shortcut."""

    pw_conv: ConvParams
    pw_bn: BNParams
    dw_conv: ConvParams
    dw_bn: BNParams

    def __post_init__(self):
        t = self.channels
        if self.pw_conv.out_channels != t:
            raise ContractViolation(f"pw_conv: must preserve {t} channels for the shortcut")
        if self.dw_conv.groups != t or self.dw_conv.in_channels_per_group != 1:
            raise ContractViolation("dw_conv: must be depthwise (groups == channels)")
        if self.dw_conv.out_channels != t:
            raise ContractViolation(f"dw_conv: must preserve {t} channels for the shortcut")

    @property
    def channels(self) -> int:
        return self.pw_conv.in_channels_per_group * self.pw_conv.groups


def bottleneck_forward(x: Tensor, p: BottleneckParams) -> Tensor:
    """x + depthwise(pointwise(x)), BN + SiLU after each conv."""
    if x.shape[1] != p.channels:
        raise ContractViolation(f"channels: bottleneck built for {p.channels}, got {x.shape[1]}")
    inner = cbs(cbs(x, p.pw_conv, p.pw_bn), p.dw_conv, p.dw_bn)
    return add(x, inner)


@dataclass(frozen=True)
class RepBottleneckParams:
    """n per-group bottlenecks over an n-way channel split, summed."""

    bottlenecks: tuple

    def __post_init__(self):
        object.__setattr__(self, "bottlenecks", tuple(self.bottlenecks))
        if not self.bottlenecks:
            raise ContractViolation("bottlenecks: need at least one")
        widths = {b.channels for b in self.bottlenecks}
        if len(widths) != 1:
            raise ContractViolation(f"bottlenecks: group widths differ: {sorted(widths)}")

    @property
    def n(self) -> int:
        return len(self.bottlenecks)

    @property
    def group_channels(self) -> int:
        return self.bottlenecks[0].channels


def rep_bottleneck_forward(x: Tensor, p: RepBottleneckParams) -> Tensor:
    """Split channels n ways, bottleneck each group, sum elementwise."""
    c = x.shape[1]
    if c % p.n:
        raise ContractViolation(f"channels: {c} not divisible by n={p.n}")
    if c // p.n != p.group_channels:
        raise ContractViolation(
            f"channels: split width {c // p.n} != bottleneck width {p.group_channels}"
        )
    parts = split_channels(x, [c // p.n] * p.n)
    out = bottleneck_forward(parts[0], p.bottlenecks[0])
    for part, bn in zip(parts[1:], p.bottlenecks[1:]):
        out = add(out, bottleneck_forward(part, bn))
    return out


@dataclass(frozen=True)
class FADCSPParams:
    gfa: GFAParams
    rep: RepBottleneckParams
    out_conv: ConvParams
    out_bn: BNParams

    def __post_init__(self):
        c = self.gfa.channels
        cat = c // self.rep.n + c
        if self.rep.group_channels * self.rep.n != c:
            raise ContractViolation(
                f"rep: covers {self.rep.group_channels * self.rep.n} channels, block has {c}"
            )
        if self.out_conv.in_channels_per_group * self.out_conv.groups != cat:
            raise ContractViolation(
                f"out_conv: input width must be c/n + c = {cat}"
            )
        if self.out_conv.out_channels != c:
            raise ContractViolation(f"out_conv: output width must be c = {c}")

    @property
    def channels(self) -> int:
        return self.gfa.channels


def fad_csp_forward(f_in: Tensor, p: FADCSPParams) -> Tensor:
    """Cross-stage fuse: CBS over concat(local rep path, gated global path)."""
    i_fd = gfa_apply(gfa_attention(f_in, p.gfa), f_in)
    i_rep = rep_bottleneck_forward(f_in, p.rep)
    return cbs(concat_channels([i_rep, i_fd]), p.out_conv, p.out_bn)


# ---------------------------------------------------------------------------
# seeded builders
# ---------------------------------------------------------------------------


def _he(rng, shape):
    fan_in = shape[1] * shape[2] * shape[3]
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _draw_bn(rng, channels: int, identity: bool) -> BNParams:
    if identity:
        return BNParams.identity(channels, eps=1e-5)
    return BNParams(
        gamma=rng.uniform(0.7, 1.3, size=channels),
        beta=rng.normal(0.0, 0.1, size=channels),
        running_mean=rng.normal(0.0, 0.1, size=channels),
        running_var=rng.uniform(0.5, 1.5, size=channels),
        eps=1e-5,
    )


def make_gfa_params(c: int, r: int = 2, seed: int = 0, identity_bn: bool = False) -> GFAParams:
    if c % r:
        raise ContractViolation(f"reduction: {r} must divide c={c}")
    t = c // 4 if c % 4 == 0 else 1  # permutation rows over the fused strip map
    rng = np.random.default_rng(seed)
    fuse_w = _he(rng, (c // r, c, 1, 1))
    fuse_bn = _draw_bn(rng, c // r, identity_bn)
    branch_h = _he(rng, (c, c // r, 1, 1))
    branch_w = _he(rng, (c, c // r, 1, 1))
    perm = tuple(rng.permutation(c // t))
    return GFAParams(
        reduction=r,
        fuse_conv=ConvParams(weights=fuse_w),
        fuse_bn=fuse_bn,
        branch_h=ConvParams(weights=branch_h),
        branch_w=ConvParams(weights=branch_w),
        amsp=AMSPConfig(group_width=t, permutation=perm, seed=seed),
    )


def make_bottleneck_params(t: int, seed: int = 0, identity_bn: bool = False) -> BottleneckParams:
    rng = np.random.default_rng(seed)
    pw = _he(rng, (t, t, 1, 1))
    pw_bn = _draw_bn(rng, t, identity_bn)
    dw = _he(rng, (t, 1, 3, 3))
    dw_bn = _draw_bn(rng, t, identity_bn)
    return BottleneckParams(
        pw_conv=ConvParams(weights=pw),
        pw_bn=pw_bn,
        dw_conv=ConvParams(weights=dw, padding=1, groups=t),
        dw_bn=dw_bn,
    )


def make_rep_bottleneck_params(
    c: int, n: int = 2, seed: int = 0, identity_bn: bool = False
) -> RepBottleneckParams:
    if c % n:
        raise ContractViolation(f"split: n={n} must divide c={c}")
    return RepBottleneckParams(
        bottlenecks=tuple(
            make_bottleneck_params(c // n, seed=seed * 1000 + i, identity_bn=identity_bn)
            for i in range(n)
        )
    )


def make_fad_csp_params(
    c: int, r: int = 2, n: int = 2, seed: int = 0, identity_bn: bool = False
) -> FADCSPParams:
    rng = np.random.default_rng(seed)
    gfa = make_gfa_params(c, r=r, seed=seed, identity_bn=identity_bn)
    rep = make_rep_bottleneck_params(c, n=n, seed=seed, identity_bn=identity_bn)
    cat = c // n + c
    out_w = _he(rng, (c, cat, 1, 1))
    out_bn = _draw_bn(rng, c, identity_bn)
    return FADCSPParams(gfa=gfa, rep=rep, out_conv=ConvParams(weights=out_w), out_bn=out_bn)
