"""Tape gradients against the central-difference oracle."""

import numpy as np
import pytest

from amsp.errors import ContractViolation
from amsp.fadcsp import (
    fad_csp_forward,
    gfa_apply,
    gfa_attention,
    make_fad_csp_params,
    make_rep_bottleneck_params,
    rep_bottleneck_forward,
)
from amsp.tensor import (
    BNParams,
    ConvParams,
    GradTape,
    Tensor,
    activation,
    batch_norm,
    cbs,
    concat_channels,
    concat_rows,
    conv2d,
    grad_check,
    mul,
    outer_hw,
    split_channels,
    strip_pools,
    transpose_hw,
    tsum,
)
from amsp.vconv import amsp_vconv_forward, make_amsp_vconv_block

TOL = 1e-5


def rt(shape, seed=0):
    return Tensor(np.random.default_rng(seed).standard_normal(shape))


class TestGradTape:
    def test_sum_gradient_is_ones(self):
        x = rt((2, 3, 4, 4), seed=1)
        g = GradTape(tsum(x)).gradient(x)
        np.testing.assert_array_equal(g, np.ones(x.shape))

    def test_unused_input_gets_zeros(self):
        x = rt((1, 2, 3, 3), seed=2)
        other = rt((1, 2, 3, 3), seed=3)
        g = GradTape(tsum(x)).gradient(other)
        assert not g.any()

    def test_scalar_output_required(self):
        x = rt((1, 2, 3, 3), seed=4)
        with pytest.raises(ContractViolation, match="size"):
            GradTape(activation(x, "silu"))

    def test_replay_deterministic(self):
        x = rt((2, 4, 5, 5), seed=5)
        block = make_amsp_vconv_block(4, g=1, seed=6)
        tape = GradTape(tsum(amsp_vconv_forward(x, block)))
        g1 = tape.gradient(x)
        g2 = tape.gradient(x)
        np.testing.assert_array_equal(g1, g2)

    def test_fanout_accumulates(self):
        # x used twice: d/dx sum(x * x) = 2x
        x = rt((1, 1, 3, 3), seed=7)
        g = GradTape(tsum(mul(x, x))).gradient(x)
        np.testing.assert_allclose(g, 2 * x.data, rtol=1e-14)


class TestGradCheckElementary:
    def test_sum_trivial(self):
        x = rt((2, 3, 4, 4), seed=8)
        assert grad_check(lambda t: tsum(t), x) < 1e-8

    def test_silu(self):
        x = rt((2, 3, 4, 4), seed=9)
        assert grad_check(lambda t: tsum(activation(t, "silu")), x) < TOL

    def test_sigmoid(self):
        x = rt((2, 3, 4, 4), seed=10)
        assert grad_check(lambda t: tsum(activation(t, "sigmoid")), x) < TOL

    def test_conv2d(self):
        x = rt((2, 3, 5, 5), seed=11)
        p = ConvParams(weights=np.random.default_rng(12).standard_normal((4, 3, 3, 3)),
                       bias=np.random.default_rng(13).standard_normal(4),
                       stride=2, padding=1)
        assert grad_check(lambda t: tsum(conv2d(t, p)), x) < TOL

    def test_grouped_conv2d(self):
        x = rt((2, 6, 5, 5), seed=14)
        p = ConvParams(weights=np.random.default_rng(15).standard_normal((4, 3, 3, 3)),
                       groups=2, padding=1)
        assert grad_check(lambda t: tsum(conv2d(t, p)), x) < TOL

    def test_batch_norm(self):
        rng = np.random.default_rng(16)
        x = rt((2, 3, 4, 4), seed=17)
        p = BNParams(gamma=rng.uniform(0.5, 1.5, 3), beta=rng.normal(size=3),
                     running_mean=rng.normal(size=3), running_var=rng.uniform(0.5, 2.0, 3))
        assert grad_check(lambda t: tsum(batch_norm(t, p)), x) < TOL

    def test_cbs(self):
        rng = np.random.default_rng(18)
        conv = ConvParams(weights=rng.standard_normal((3, 2, 3, 3)), padding=1)
        bn = BNParams(gamma=rng.uniform(0.5, 1.5, 3), beta=rng.normal(size=3),
                      running_mean=rng.normal(size=3), running_var=rng.uniform(0.5, 2.0, 3))
        x = rt((2, 2, 4, 4), seed=19)
        assert grad_check(lambda t: tsum(cbs(t, conv, bn)), x) < TOL

    def test_strip_pools(self):
        x = rt((2, 3, 4, 5), seed=20)

        def f_h(t):
            v_h, _ = strip_pools(t)
            return tsum(mul(v_h, v_h))

        def f_w(t):
            _, v_w = strip_pools(t)
            return tsum(mul(v_w, v_w))

        def f_both(t):
            v_h, v_w = strip_pools(t)
            return tsum(concat_rows([v_h, transpose_hw(v_w)]))

        assert grad_check(f_h, x) < TOL
        assert grad_check(f_w, x) < TOL
        assert grad_check(f_both, x) < TOL

    def test_split_concat(self):
        x = rt((2, 4, 3, 3), seed=21)

        def f(t):
            a, b = split_channels(t, [1, 3])
            return tsum(concat_channels([mul(a, a), b]))

        assert grad_check(f, x) < TOL

    def test_outer_product(self):
        x = rt((1, 2, 4, 1), seed=22)
        y_fixed = rt((1, 2, 3, 1), seed=23)
        assert grad_check(lambda t: tsum(outer_hw(t, y_fixed)), x) < TOL
        assert grad_check(lambda t: tsum(outer_hw(y_fixed, t)), x) < TOL
        assert grad_check(lambda t: tsum(activation(outer_hw(t, y_fixed), "sigmoid")), x) < TOL

    def test_eps_range_enforced(self):
        x = rt((1, 1, 2, 2), seed=24)
        with pytest.raises(ContractViolation, match="eps"):
            grad_check(lambda t: tsum(t), x, eps=1e-2)


class TestGradCheckBlocks:
    def test_amsp_vconv_block(self):
        x = rt((2, 8, 6, 6), seed=25)
        block = make_amsp_vconv_block(8, seed=26)
        assert grad_check(lambda t: tsum(amsp_vconv_forward(t, block)), x) < TOL

    def test_gfa_attention_and_apply(self):
        x = rt((2, 8, 6, 6), seed=27)
        params = make_fad_csp_params(8, seed=28)

        def f(t):
            return tsum(gfa_apply(gfa_attention(t, params.gfa), t))

        assert grad_check(f, x) < TOL

    def test_rep_bottleneck(self):
        x = rt((2, 8, 6, 6), seed=29)
        rep = make_rep_bottleneck_params(8, n=2, seed=30)
        assert grad_check(lambda t: tsum(rep_bottleneck_forward(t, rep)), x) < TOL

    def test_fad_csp_block(self):
        x = rt((2, 8, 6, 6), seed=31)
        params = make_fad_csp_params(8, seed=32)
        assert grad_check(lambda t: tsum(fad_csp_forward(t, params)), x) < TOL
