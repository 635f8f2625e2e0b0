"""Stress-strain curve reconstruction and inversion to Minkowski descriptors."""

__version__ = "0.1.0"

from . import data, strength, reconstructor, predictors, evaluation, nnet
from .metrics import r2
