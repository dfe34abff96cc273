"""Pick the pivot kernel at import time.

``BILINVFA_KERNEL=python`` forces the numpy fallback; ``compiled`` makes a
missing extension an import error instead of a silent fallback.
"""

import os

_choice = os.environ.get("BILINVFA_KERNEL", "auto").lower()

if _choice == "python":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        if _choice == "compiled":
            raise
        from . import _kernels_py as kernels

BACKEND = "compiled" if kernels.__name__.endswith("._kernels") else "python"


def load(name: str):
    """Return the kernel module called ``compiled`` or ``python``."""
    if name == "python":
        from . import _kernels_py
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
