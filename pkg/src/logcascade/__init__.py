"""Adaptive cascade inference for automated log analysis.

A small, cheap classifier answers every input; a Bayesian uncertainty
estimate built from stochastic forward passes decides which inputs it
cannot be trusted on, and only those are escalated to a large-model
gateway, prompted with retrieved error-prone cases.
"""

from logcascade.errors import CascadeError

__version__ = "0.1.0"

__all__ = ["CascadeError", "__version__"]
