"""Select the detector kernel backend at import time.

The compiled extension is preferred; set ``TELELAT_PURE=1`` to force the
pure-Python implementation.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("TELELAT_PURE", "").strip() not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _speedups as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND: str = _impl.BACKEND
lowpass = _impl.lowpass
run_detector = _impl.run_detector
initial_state = _impl.initial_state


def backends() -> dict:
    """All importable backends by name, for benchmarks and equivalence tests."""
    found = {"python": _pykernels}
    try:
        from . import _speedups
    except ImportError:
        pass
    else:
        found["cython"] = _speedups
    return found
