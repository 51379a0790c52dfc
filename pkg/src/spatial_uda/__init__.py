"""Adversarial unsupervised domain adaptation for lesion segmentation."""

__version__ = "0.1.0"
