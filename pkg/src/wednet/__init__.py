"""Weather-effect disentanglement forecasting for urban flow.

A dual-branch spatio-temporal attention model that separates intrinsic
traffic dynamics from weather-induced effects, plus an attention-driven
causal augmentation pipeline for rare extreme-weather samples.
"""

from wednet.datamodel import (
    CONDITION_CLASSES,
    CONDITION_EXTREME,
    CONDITION_NORMAL,
    ConditionLabel,
    RegionGraph,
    SampleWindow,
    STTensor,
    ValidationError,
    chronological_split,
    label_condition,
)

__version__ = "0.1.0"

__all__ = [
    "CONDITION_CLASSES",
    "CONDITION_EXTREME",
    "CONDITION_NORMAL",
    "ConditionLabel",
    "RegionGraph",
    "STTensor",
    "SampleWindow",
    "ValidationError",
    "chronological_split",
    "label_condition",
    "__version__",
]
