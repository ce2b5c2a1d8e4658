"""Float64 tensor algebra with reverse-mode differentiation, RNG, Adam."""

from .checkpoint import (
    FORMAT_VERSION,
    CheckpointFormatError,
    CheckpointVersionError,
    load_tensors,
    save_tensors,
)
from .gradcheck import finite_difference_check
from .module import Module, linear_init, param
from .optim import AdamState, NanGradientError, adam_step
from .rng import Rng
from .scan import (
    HAVE_COMPILED,
    active_kernel,
    scan_blocked,
    scan_compiled,
    scan_naive,
    ssm_scan,
)
from .tensor import (
    ShapeError,
    Tensor,
    add,
    as_tensor,
    concat,
    conv1d,
    conv2d,
    div,
    dropout,
    exp,
    expm1,
    flip,
    layer_norm,
    log,
    matmul,
    mean,
    mul,
    narrow,
    neg,
    no_grad,
    phi1,
    relu,
    reshape,
    sigmoid,
    silu,
    softmax,
    softplus,
    sqrt,
    standardize,
    sub,
    sum_,
    swish,
    tanh,
    time_shift,
    transpose,
)

__all__ = [name for name in dir() if not name.startswith("_")]
