"""Backend selection for the inner loops.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``BITMARK_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("BITMARK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

sample_scale = _impl.sample_scale
count_scale = _impl.count_scale
flip_scan = _impl.flip_scan

BACKENDS = {"python": _pykernels}
if BACKEND == "compiled":
    BACKENDS["compiled"] = _impl
else:
    try:
        from . import _kernels
        BACKENDS["compiled"] = _kernels
    except ImportError:
        pass
