"""Pure-numpy convolution kernels (im2col + matmul).

Fallback for :mod:`amsp._kernels`. Inputs arrive already zero-padded; padding
is handled by the caller so both backends see identical arrays.
"""

import numpy as np


def _im2col(x, kh, kw, stride):
    """(b, c, hp, wp) -> (b, c*kh*kw, ho*wo), C-contiguous copy."""
    b, c, hp, wp = x.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sb, sc, sh, sw = x.strides
    patches = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, kh, kw, ho, wo),
        strides=(sb, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return patches.reshape(b, c * kh * kw, ho * wo)


def conv_forward(x, w, bias, stride, groups):
    b, cin, hp, wp = x.shape
    cout, cig, kh, kw = w.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cog = cout // groups

    out = np.empty((b, cout, ho, wo), dtype=np.float64)
    for g in range(groups):
        xg = x[:, g * cig : (g + 1) * cig]
        wmat = w[g * cog : (g + 1) * cog].reshape(cog, -1)
        cols = _im2col(np.ascontiguousarray(xg), kh, kw, stride)
        out[:, g * cog : (g + 1) * cog] = (wmat @ cols).reshape(b, cog, ho, wo)
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def conv_grad_input(gout, w, stride, groups, hp, wp):
    b, cout, ho, wo = gout.shape
    _, cig, kh, kw = w.shape
    cog = cout // groups
    cin = cig * groups

    gx = np.zeros((b, cin, hp, wp), dtype=np.float64)
    for g in range(groups):
        wmat = w[g * cog : (g + 1) * cog].reshape(cog, -1)
        gmat = gout[:, g * cog : (g + 1) * cog].reshape(b, cog, ho * wo)
        gcols = (wmat.T @ gmat).reshape(b, cig, kh, kw, ho, wo)
        tgt = gx[:, g * cig : (g + 1) * cig]
        # scatter-add each kernel tap back onto the strided input window
        for u in range(kh):
            for v in range(kw):
                tgt[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += gcols[
                    :, :, u, v
                ]
    return gx
