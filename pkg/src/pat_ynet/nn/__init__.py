from .tensor import Tensor, as_tensor, zero_grads
from .functional import (
    area_downsample,
    batch_norm2d,
    bilinear_matrix,
    concat_channels,
    conv2d,
    max_pool2d,
    mse,
    relu,
    resize_bilinear,
    up_conv2d,
)
from .optim import AdamState, adam_step
from .gradcheck import finite_diff_check

__all__ = [
    "Tensor", "as_tensor", "zero_grads",
    "area_downsample", "batch_norm2d", "bilinear_matrix", "concat_channels", "conv2d",
    "max_pool2d", "mse", "relu", "resize_bilinear", "up_conv2d",
    "AdamState", "adam_step", "finite_diff_check",
]
