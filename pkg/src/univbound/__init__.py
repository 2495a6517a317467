"""Numerical checks of universal bound and decay estimates for second-order
evolution equations with superlinear damping and restoring force."""

__version__ = "0.1.0"
