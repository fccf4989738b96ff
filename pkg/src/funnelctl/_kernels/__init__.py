"""Hot-loop kernels: compiled extension if built, pure Python otherwise.

Set ``FUNNELCTL_PURE_PYTHON=1`` to force the fallback.
"""

import os

from ._cascade_py import cascade_kernel as cascade_kernel_py

try:
    if os.environ.get("FUNNELCTL_PURE_PYTHON"):
        raise ImportError("pure-Python kernels requested")
    from ._cascade import cascade_kernel as cascade_kernel_ext
except ImportError:
    cascade_kernel_ext = None

cascade_kernel = cascade_kernel_ext or cascade_kernel_py
BACKEND = "compiled" if cascade_kernel_ext is not None else "python"

__all__ = ["cascade_kernel", "cascade_kernel_py", "cascade_kernel_ext", "BACKEND"]
