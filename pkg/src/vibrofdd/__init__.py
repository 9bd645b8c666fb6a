"""Vibration-based machine fault detection: features, PCA, SVM and MLP."""

from .ingest import FaultClass, RecordBatch, VibrationWindow

__version__ = "0.1.0"
__all__ = ["FaultClass", "RecordBatch", "VibrationWindow", "__version__"]
