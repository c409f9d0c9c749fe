"""AMSP vortex convolution block.

The block halves the channel count with a CBS stage, partitions the result
into contiguous channel rows (amplitude modulation), reorders the rows by a
fixed seeded permutation (shuffling perturbation), convolves every row group
with one shared kernel (the vortex convolution), normalizes and activates,
then concatenates the CBS branch back on so the output keeps the input
width. Sharing one kernel across groups is what cuts the parameter count
relative to a dense convolution of the same width.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ContractViolation
from .tensor import (
    BNParams,
    ConvParams,
    Tensor,
    activation,
    batch_norm,
    cbs,
    concat_channels,
    conv2d,
    _result,
)


@dataclass(frozen=True)
class AMSPConfig:
    """Channel grouping width and the fixed row permutation."""

    group_width: int
    permutation: tuple
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "permutation", tuple(int(p) for p in self.permutation))
        if self.group_width < 1:
            raise ContractViolation(f"group_width: must be >= 1, got {self.group_width}")
        g = len(self.permutation)
        if sorted(self.permutation) != list(range(g)):
            raise ContractViolation(
                f"permutation: {self.permutation} is not a bijection on 0..{g - 1}"
            )

    @property
    def groups(self) -> int:
        return len(self.permutation)

    @property
    def channels(self) -> int:
        return self.group_width * self.groups

    @staticmethod
    def sampled(groups: int, group_width: int, seed: int) -> "AMSPConfig":
        """Sample the permutation once from a seeded generator; fixed thereafter."""
        perm = np.random.default_rng(seed).permutation(groups)
        return AMSPConfig(group_width=group_width, permutation=tuple(perm), seed=seed)

    def inverse(self) -> "AMSPConfig":
        inv = [0] * self.groups
        for j, p in enumerate(self.permutation):
            inv[p] = j
        return AMSPConfig(group_width=self.group_width, permutation=tuple(inv), seed=self.seed)


def amsp_permute(x: Tensor, cfg: AMSPConfig) -> Tensor:
    """Reorder contiguous channel rows of width ``t`` by ``cfg.permutation``.

    Output row ``j`` is input row ``permutation[j]``; channel order inside a
    row is preserved, so the channel multiset never changes.
    """
    c = x.shape[1]
    t = cfg.group_width
    if c % t:
        raise ContractViolation(f"channels: {c} not divisible by group_width={t}")
    if c // t != cfg.groups:
        raise ContractViolation(
            f"channels: {c} channels form {c // t} rows of width {t}, "
            f"but the permutation covers {cfg.groups}"
        )
    index = np.concatenate([np.arange(p * t, (p + 1) * t) for p in cfg.permutation])
    out = x.data[:, index]

    def vjp(g):
        gx = np.empty_like(g)
        gx[:, index] = g
        return (gx,)

    return _result("amsp_permute", out, (x,), vjp)


@dataclass(frozen=True)
class VConvParams:
    """One shared kernel applied to every channel group, then BN + SiLU."""

    shared_kernel: np.ndarray
    groups: int
    post_bn: BNParams
    stride: int = 1
    padding: int = 1

    def __post_init__(self):
        kernel = np.array(self.shared_kernel, dtype=np.float64, order="C")
        if kernel.ndim != 4:
            raise ContractViolation(f"shared_kernel: expected rank 4, got rank {kernel.ndim}")
        kernel.flags.writeable = False
        object.__setattr__(self, "shared_kernel", kernel)
        if self.groups < 1:
            raise ContractViolation(f"groups: must be >= 1, got {self.groups}")
        if self.post_bn.channels != self.out_channels:
            raise ContractViolation(
                f"post_bn: {self.post_bn.channels} channels, vortex output has {self.out_channels}"
            )

    @property
    def t_out(self) -> int:
        return self.shared_kernel.shape[0]

    @property
    def t_in(self) -> int:
        return self.shared_kernel.shape[1]

    @property
    def out_channels(self) -> int:
        return self.groups * self.t_out

    @cached_property
    def _conv(self) -> ConvParams:
        # the tiling is a runtime view; only the shared kernel is stored
        tiled = np.concatenate([self.shared_kernel] * self.groups, axis=0)
        return ConvParams(
            weights=tiled, stride=self.stride, padding=self.padding, groups=self.groups
        )


def vortex_conv(y: Tensor, p: VConvParams) -> Tensor:
    """Shared-weight grouped convolution, group-order concat, BN + SiLU."""
    c = y.shape[1]
    if c != p.groups * p.t_in:
        raise ContractViolation(
            f"channels: vortex expects {p.groups} groups x {p.t_in} = "
            f"{p.groups * p.t_in} channels, got {c}"
        )
    z = conv2d(y, p._conv)
    return activation(batch_norm(z, p.post_bn), "silu")


@dataclass(frozen=True)
class AMSPVConvBlock:
    """Entry CBS + AMSP permute + vortex convolution + residual concat."""

    entry_conv: ConvParams
    entry_bn: BNParams
    amsp: AMSPConfig
    vconv: VConvParams

    def __post_init__(self):
        c_in = self.entry_conv.in_channels_per_group * self.entry_conv.groups
        c_half = self.entry_conv.out_channels
        if c_half * 2 != c_in:
            raise ContractViolation(
                f"entry_conv: must halve channels, maps {c_in} -> {c_half}"
            )
        if self.amsp.channels != c_half:
            raise ContractViolation(
                f"amsp: covers {self.amsp.channels} channels, entry produces {c_half}"
            )
        if self.vconv.out_channels != c_half:
            raise ContractViolation(
                f"vconv: produces {self.vconv.out_channels} channels, need {c_half} "
                f"for the residual concat to restore {c_in}"
            )
        if self.vconv.groups != self.amsp.groups:
            raise ContractViolation(
                f"groups: vortex has {self.vconv.groups}, permutation has {self.amsp.groups}"
            )

    @property
    def channels(self) -> int:
        return self.entry_conv.out_channels * 2

    def weight_element_count(self) -> int:
        """Stored convolution weight elements (bias and BN excluded)."""
        return self.entry_conv.weights.size + self.vconv.shared_kernel.size


def amsp_vconv_forward(f_in: Tensor, block: AMSPVConvBlock) -> Tensor:
    """Full block forward; preserves (b, c, h, w).

    The first c/2 output channels are the CBS branch untouched; the second
    half is the perturbed, vortex-convolved branch.
    """
    c = f_in.shape[1]
    if c % 2:
        raise ContractViolation(f"channels: block needs an even channel count, got {c}")
    if c != block.channels:
        raise ContractViolation(f"channels: block built for {block.channels}, got {c}")
    x = cbs(f_in, block.entry_conv, block.entry_bn)
    y = amsp_permute(x, block.amsp)
    z = vortex_conv(y, block.vconv)
    return concat_channels([x, z])


def vconv_param_count(c: int, k: int, g: int) -> tuple:
    """(vortex block weights, standard c->c conv weights), bias/BN excluded.

    The vortex side is the entry CBS conv (c -> c/2) plus the single shared
    group kernel of width c/(2g); the standard side is one dense c -> c
    convolution with the same kernel size.
    """
    if c < 2 or c % 2:
        raise ContractViolation(f"channels: need an even c >= 2, got {c}")
    if k < 1:
        raise ContractViolation(f"kernel: must be >= 1, got {k}")
    if g < 1 or (c // 2) % g:
        raise ContractViolation(f"groups: {g} must divide c/2 = {c // 2}")
    t = (c // 2) // g
    vconv_params = c * (c // 2) * k * k + t * t * k * k
    standard_params = c * c * k * k
    return vconv_params, standard_params


def make_amsp_vconv_block(
    c: int, k: int = 3, g: int = 4, seed: int = 0, identity_bn: bool = False
) -> AMSPVConvBlock:
    """Seeded random block for probes, benchmarks and the CLI.

    Draw order is fixed (entry weights, entry BN, permutation, shared kernel,
    post BN) so a seed pins every parameter. The post-BN statistics repeat
    per group position, keeping the group outputs of identical inputs
    identical despite normalization.
    """
    if c % 2:
        raise ContractViolation(f"channels: need even c, got {c}")
    if k % 2 == 0:
        raise ContractViolation(f"kernel: need odd k to preserve shape, got {k}")
    if (c // 2) % g:
        raise ContractViolation(f"groups: {g} must divide c/2 = {c // 2}")
    t = (c // 2) // g
    rng = np.random.default_rng(seed)

    entry_w = rng.normal(0.0, np.sqrt(2.0 / (c * k * k)), size=(c // 2, c, k, k))
    entry_bn = _draw_bn(rng, c // 2, identity_bn)
    perm = tuple(rng.permutation(g))
    shared = rng.normal(0.0, np.sqrt(2.0 / (t * k * k)), size=(t, t, k, k))
    post_bn = _draw_bn(rng, t, identity_bn, tile=g)

    return AMSPVConvBlock(
        entry_conv=ConvParams(weights=entry_w, stride=1, padding=k // 2),
        entry_bn=entry_bn,
        amsp=AMSPConfig(group_width=t, permutation=perm, seed=seed),
        vconv=VConvParams(shared_kernel=shared, groups=g, post_bn=post_bn, padding=k // 2),
    )


def make_standard_block(c: int, k: int = 3, seed: int = 0, identity_bn: bool = False):
    """The dense CBS counterpart (c -> c) the parameter claim compares against."""
    if k % 2 == 0:
        raise ContractViolation(f"kernel: need odd k to preserve shape, got {k}")
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, np.sqrt(2.0 / (c * k * k)), size=(c, c, k, k))
    bn = _draw_bn(rng, c, identity_bn)
    conv = ConvParams(weights=w, stride=1, padding=k // 2)
    return conv, bn


def standard_forward(f_in: Tensor, params) -> Tensor:
    conv, bn = params
    return cbs(f_in, conv, bn)


def _draw_bn(rng, channels: int, identity: bool, tile: int = 1) -> BNParams:
    if identity:
        return BNParams.identity(channels * tile, eps=1e-5)
    gamma = rng.uniform(0.7, 1.3, size=channels)
    beta = rng.normal(0.0, 0.1, size=channels)
    mean = rng.normal(0.0, 0.1, size=channels)
    var = rng.uniform(0.5, 1.5, size=channels)
    if tile > 1:
        gamma, beta, mean, var = (np.tile(a, tile) for a in (gamma, beta, mean, var))
    return BNParams(gamma=gamma, beta=beta, running_mean=mean, running_var=var, eps=1e-5)
