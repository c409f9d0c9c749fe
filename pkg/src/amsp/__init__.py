"""Numerical kernels for AMSP vortex convolution, FAD-CSP attention blocks,
and NMS-Similar detection post-processing.

The heavy convolution loops live in an optional compiled extension with a
pure-numpy fallback; see :mod:`amsp.backend`.
"""

from . import backend
from .errors import ContractViolation, NonFiniteError
from .fadcsp import (
    BottleneckParams,
    FADCSPParams,
    GFAParams,
    RepBottleneckParams,
    bottleneck_forward,
    fad_csp_forward,
    gfa_apply,
    gfa_attention,
    make_fad_csp_params,
    rep_bottleneck_forward,
)
from .nms import (
    DetBox,
    NMSSimilarConfig,
    SuppressionStats,
    aspect_sim,
    bench_nms,
    gaussian_decay,
    iou,
    nms_hard,
    nms_similar,
    soft_nms,
    suppress_multiclass,
)
from .tensor import (
    BNParams,
    ConvParams,
    GradTape,
    Tensor,
    activation,
    batch_norm,
    cbs,
    concat_channels,
    conv2d,
    grad_check,
    gradients,
    split_channels,
    strip_pools,
)
from .vconv import (
    AMSPConfig,
    AMSPVConvBlock,
    VConvParams,
    amsp_permute,
    amsp_vconv_forward,
    make_amsp_vconv_block,
    vconv_param_count,
    vortex_conv,
)

__version__ = "0.1.0"
