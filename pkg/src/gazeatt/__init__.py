"""Generalized visual attention: gaze angle, person-dependent saliency and fixation likelihood."""

__version__ = "0.1.0"
