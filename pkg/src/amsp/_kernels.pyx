# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution kernels (float64).

Same contract as amsp._kernels_py: inputs arrive pre-padded, grouped
cross-correlation semantics, deterministic accumulation order (fixed
(ic, u, v) pass sequence over contiguous output rows, which the C compiler
can vectorize).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w, bias,
                 int stride, int groups):
    cdef Py_ssize_t b = x.shape[0], hp = x.shape[2], wp = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0], cig = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // stride + 1
    cdef Py_ssize_t wo = (wp - kw) // stride + 1
    cdef Py_ssize_t cog = cout // groups

    out_arr = np.zeros((b, cout, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef const double[::1] bv
    cdef bint has_bias = bias is not None

    cdef Py_ssize_t n, oc, oh, ow, ic, u, v, base
    cdef double wval, b0
    cdef const double* xrow
    cdef double* orow

    if has_bias:
        bv = np.ascontiguousarray(bias, dtype=np.float64)

    with nogil:
        for n in range(b):
            for oc in range(cout):
                base = (oc // cog) * cig
                if has_bias:
                    b0 = bv[oc]
                    for oh in range(ho):
                        orow = &out[n, oc, oh, 0]
                        for ow in range(wo):
                            orow[ow] = b0
                for ic in range(cig):
                    for u in range(kh):
                        for v in range(kw):
                            wval = w[oc, ic, u, v]
                            for oh in range(ho):
                                xrow = &x[n, base + ic, oh * stride + u, v]
                                orow = &out[n, oc, oh, 0]
                                if stride == 1:
                                    for ow in range(wo):
                                        orow[ow] += wval * xrow[ow]
                                else:
                                    for ow in range(wo):
                                        orow[ow] += wval * xrow[ow * stride]
    return out_arr


def conv_grad_input(const double[:, :, :, ::1] gout, const double[:, :, :, ::1] w,
                    int stride, int groups, Py_ssize_t hp, Py_ssize_t wp):
    cdef Py_ssize_t b = gout.shape[0], cout = gout.shape[1]
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3]
    cdef Py_ssize_t cig = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t cog = cout // groups
    cdef Py_ssize_t cin = cig * groups

    gx_arr = np.zeros((b, cin, hp, wp), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr

    cdef Py_ssize_t n, oc, oh, ow, ic, u, v, base
    cdef double wval
    cdef const double* grow
    cdef double* xrow

    with nogil:
        for n in range(b):
            for oc in range(cout):
                base = (oc // cog) * cig
                for ic in range(cig):
                    for u in range(kh):
                        for v in range(kw):
                            wval = w[oc, ic, u, v]
                            for oh in range(ho):
                                grow = &gout[n, oc, oh, 0]
                                xrow = &gx[n, base + ic, oh * stride + u, v]
                                if stride == 1:
                                    for ow in range(wo):
                                        xrow[ow] += wval * grow[ow]
                                else:
                                    for ow in range(wo):
                                        xrow[ow * stride] += wval * grow[ow]
    return gx_arr
