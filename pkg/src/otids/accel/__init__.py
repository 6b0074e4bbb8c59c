"""Backend selection for the hot numeric loops.

The environment variable OTIDS_BACKEND picks the implementation:

  auto   (default) compiled numba kernels when numba imports, else numpy
  numba  require the compiled kernels, fail loudly if numba is missing
  numpy  force the pure-numpy fallbacks

Both backends implement the same contracts with the same floating point
operation order, so swapping them does not change results, only speed.
The module-level split_scan / tree_apply / smo_solve names point at the
selected backend; benchmarks import accel._numpy and accel._numba
directly to compare the two.
"""

from __future__ import annotations

import os

from . import _numpy

_requested = os.environ.get("OTIDS_BACKEND", "auto").strip().lower()

if _requested in ("", "auto"):
    try:
        from . import _numba as _impl
        _BACKEND = "numba"
    except ImportError:
        _impl = _numpy
        _BACKEND = "numpy"
elif _requested == "numba":
    from . import _numba as _impl
    _BACKEND = "numba"
elif _requested == "numpy":
    _impl = _numpy
    _BACKEND = "numpy"
else:
    raise ValueError(
        f"OTIDS_BACKEND={_requested!r} not understood; use auto, numba or numpy"
    )

split_scan = _impl.split_scan
tree_apply = _impl.tree_apply
smo_solve = _impl.smo_solve


def backend_name() -> str:
    """Name of the backend serving the kernel entry points."""
    return _BACKEND
