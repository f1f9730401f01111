"""MFCC front-ends (float and fixed-point), ANFIS and MLP classifiers for
isolated speech-command recognition."""

__version__ = "0.1.0"
