"""Ticktack: sexagenary-cycle temporal encoding and alignment toolkit."""

from .geometry import EncodingConfig
from .model import ModelConfig, ParameterSet
from .alignment import TrainingConfig
from .sexagenary import CycleIndex, GregorianYear, SexagenaryTerm

__version__ = "0.1.0"

__all__ = [
    "EncodingConfig",
    "ModelConfig",
    "ParameterSet",
    "TrainingConfig",
    "CycleIndex",
    "GregorianYear",
    "SexagenaryTerm",
    "__version__",
]
