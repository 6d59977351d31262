"""Kernel dispatch: compiled extension when importable, NumPy fallback otherwise.

Set ``PROBCON_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("PROBCON_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py

chi2comb_integrand = _impl.chi2comb_integrand
chi2comb_integral = _impl.chi2comb_integral

__all__ = ["BACKEND", "chi2comb_integrand", "chi2comb_integral"]
