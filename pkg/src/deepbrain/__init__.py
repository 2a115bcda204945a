"""Attention-enhanced stacked LSTM classification of coarse single-channel EEG scores."""

__version__ = "0.1.0"
