"""
Reverse-mode automatic differentiation on numpy arrays
"""

from .tensor import Tape, Tensor, backward
from .nn import Module
from .optim import Adam, AdamW, CosineAnnealingWarmRestarts
from .gradcheck import grad_check
