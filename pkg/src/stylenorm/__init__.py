"""Convolution-based style normalization in NumPy.

Local patch standardization, adaptive convolution with style-predicted
kernels, the AdaIN and whitening/coloring baselines expressed as 1x1
convolutions, a small reverse-mode autodiff engine with finite-difference
certification, and a desk-scale two-domain translation model.
"""
from .adacon import AdaConBlock, AdaConConfig, adacon_forward, style_sensitivity
from .tensor import PatchTensor, ShapeError, fold, unfold

__all__ = [
    "AdaConBlock",
    "AdaConConfig",
    "PatchTensor",
    "ShapeError",
    "adacon_forward",
    "fold",
    "style_sensitivity",
    "unfold",
]
__version__ = "0.1.0"
