"""Vandalism detection for wiki revision histories.

Edits are labeled by revert detection, turned into sparse bag-of-words
difference/ratio features, scored by L2-regularized logistic regression and
calibrated with isotonic regression.
"""

__version__ = "0.1.0"
