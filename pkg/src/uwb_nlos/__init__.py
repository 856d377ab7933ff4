"""UWB propagation-condition classification (LOS / DP-NLOS / NDP-NLOS)."""

from .cir import ChannelDiagnostics, PropagationClass, RangingRecord, Waveform, magnitude_window
from .features import FeatureConfig, FeatureVector, extract_features
from .pipeline import LabelingThresholds, TwoStepClassifier, classify, label_from_bias, train_two_step
from .svm import KernelSpec, SvmModel, TrainConfig, predict, train

__all__ = [
    "ChannelDiagnostics", "PropagationClass", "RangingRecord", "Waveform", "magnitude_window",
    "FeatureConfig", "FeatureVector", "extract_features",
    "LabelingThresholds", "TwoStepClassifier", "classify", "label_from_bias", "train_two_step",
    "KernelSpec", "SvmModel", "TrainConfig", "predict", "train",
]
__version__ = "0.1.0"
