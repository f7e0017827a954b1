"""Unsupervised relapse-day detection from wrist-wearable biosignals.

Pipeline stages: synthetic data generation, Hampel cleaning, 5-minute
sleep/awake feature extraction (activity energy, BPM/SDNN, LF/HF band
power via Welch), matrix building with unit-norm standardization,
Isolation Forest scoring, and ranking evaluation (ROC-AUC / PR-AUC
harmonic mean across subjects).
"""

__version__ = "0.1.0"

from .errors import DataContractError, UsageError

__all__ = ["DataContractError", "UsageError", "__version__"]
