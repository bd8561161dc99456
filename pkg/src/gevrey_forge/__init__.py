"""Exact-plus-numeric construction of oscillatory kernel solutions for
``D_x^2 + (x^{2n+1} D_y)^2 + (x^n y^m D_y)^2`` and extraction of their
Gevrey index in ``y``."""

__version__ = "0.1.0"

from .exactnum import Params, derive_params, solve_r  # noqa: E402

__all__ = ["Params", "derive_params", "solve_r", "__version__"]
