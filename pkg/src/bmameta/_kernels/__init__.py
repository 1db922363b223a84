"""Likelihood kernel backend selection.

The environment variable ``BMAMETA_KERNELS`` picks the implementation:

* ``auto`` (default): numba-compiled kernels when numba imports, otherwise
  the vectorized numpy fallback;
* ``numba``: require the compiled kernels, raise if numba is unavailable;
* ``numpy``: force the fallback (useful for debugging and benchmarking).

``benchmarks/kernel_bench.py`` compares the two backends on realistic
workloads; the test suite asserts they agree numerically.
"""

from __future__ import annotations

import os

from . import reference

_choice = os.environ.get("BMAMETA_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"BMAMETA_KERNELS must be auto, numba or numpy, got {_choice!r}")

if _choice == "numpy":
    _impl = reference
    BACKEND = "numpy"
else:
    try:
        from . import jit as _impl  # noqa: F401

        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise RuntimeError("BMAMETA_KERNELS=numba but numba is not installed")
        _impl = reference
        BACKEND = "numpy"

normal_loglik = _impl.normal_loglik
clustered_loglik = _impl.clustered_loglik
selection_loglik = _impl.selection_loglik
selection_clustered_loglik = _impl.selection_clustered_loglik
normal_loglik_mu_marginal = _impl.normal_loglik_mu_marginal
clustered_loglik_mu_marginal = _impl.clustered_loglik_mu_marginal


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND
