"""Kernel backend selection.

Two interchangeable implementations of the convolution hot kernels exist:

* ``amsp._kernels``   - Cython extension, direct loops, low per-call overhead
* ``amsp._kernels_py``- pure numpy, im2col + BLAS matmul

The compiled one is preferred when importable. ``AMSP_KERNELS=python`` or
``AMSP_KERNELS=compiled`` forces a choice (the latter fails loudly when the
extension was never built). Both expose the same two functions:

    conv_forward(x_padded, weights, bias, stride, groups) -> out
    conv_grad_input(grad_out, weights, stride, groups, hp, wp) -> grad_x_padded

and agree to floating-point roundoff; within one backend results are
bit-reproducible.
"""

import contextlib
import os

from . import _kernels_py

COMPILED = "compiled"
PYTHON = "python"

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_IMPLS = {PYTHON: _kernels_py}
if _compiled is not None:
    _IMPLS[COMPILED] = _compiled


def _initial():
    forced = os.environ.get("AMSP_KERNELS", "").strip().lower()
    if forced:
        if forced not in (COMPILED, PYTHON):
            raise RuntimeError(
                f"AMSP_KERNELS must be 'compiled' or 'python', got {forced!r}"
            )
        if forced not in _IMPLS:
            raise RuntimeError(
                "AMSP_KERNELS=compiled but the extension is not built; "
                "run 'python setup.py build_ext --inplace' or reinstall"
            )
        return forced
    return COMPILED if _compiled is not None else PYTHON


_active_name = _initial()


def available() -> tuple:
    """Names of the importable backends, preferred first."""
    return tuple(sorted(_IMPLS, reverse=False, key=lambda n: n != COMPILED))


def name() -> str:
    return _active_name


def active():
    return _IMPLS[_active_name]


def impl(backend: str):
    try:
        return _IMPLS[backend]
    except KeyError:
        raise RuntimeError(f"kernel backend {backend!r} is not available") from None


@contextlib.contextmanager
def use(backend: str):
    """Temporarily switch the active backend (benchmarks and tests)."""
    global _active_name
    impl(backend)  # validate
    prev = _active_name
    _active_name = backend
    try:
        yield
    finally:
        _active_name = prev
