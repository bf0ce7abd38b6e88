"""Compute-core selection: compiled extension when available, numpy fallback otherwise.

Set FLASHANN_PURE_PYTHON=1 to force the fallback.  The batch-lookup kernel
inside the selected core is chosen separately ("auto", "scalar",
"vector128", "vector256", "vector512"); the FLASH_ANN_KERNEL environment
variable overrides any requested kernel name.
"""

from __future__ import annotations

import os

from . import _pycore
from .errors import ConfigError

if os.environ.get("FLASHANN_PURE_PYTHON", "") not in ("", "0"):
    impl = _pycore
    HAVE_EXT = False
else:
    try:
        from ._kernels import _core as impl  # type: ignore[no-redef]

        HAVE_EXT = True
    except ImportError:
        impl = _pycore
        HAVE_EXT = False

KERNEL_IDS = {"scalar": 0, "vector128": 1, "vector256": 2, "vector512": 3}


def active_core():
    return impl


def core_name() -> str:
    return impl.CORE_NAME


def resolve_kernel(name: str | None = None, core=None) -> int:
    """Map a kernel name to the selected core's kernel id.

    "auto" (or None) picks the widest kernel the core was compiled with.
    FLASH_ANN_KERNEL overrides the requested name.
    """
    core = core or impl
    env = os.environ.get("FLASH_ANN_KERNEL", "").strip()
    if env:
        name = env
    name = (name or "auto").lower()
    avail = core.available_kernels()
    if name == "auto":
        name = avail[-1]
    if name not in KERNEL_IDS:
        raise ConfigError(f"unknown kernel {name!r}; expected auto|scalar|vector128|vector256|vector512")
    if name not in avail:
        raise ConfigError(f"kernel {name!r} not available in this build (have: {', '.join(avail)})")
    return KERNEL_IDS[name]
