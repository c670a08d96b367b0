"""Causally regularized representation learning under covariate shift.

A feature extractor and classifier are trained jointly with per-sample
balancing weights that remove confounded correlations from the source
domain, so that the learned predictor transfers to a target domain whose
spurious correlations differ.
"""

__version__ = "0.1.0"
