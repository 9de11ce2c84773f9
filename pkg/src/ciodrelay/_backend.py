"""Backend selection for the batch decode kernels.

The compiled extension is preferred when importable; set CIODRELAY_BACKEND to
"c" or "python" to force one (forcing "c" raises if the extension is absent).
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykern


class BackendError(RuntimeError):
    pass


def _load() -> ModuleType:
    choice = os.environ.get("CIODRELAY_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "c", "python"):
        raise BackendError(
            f"CIODRELAY_BACKEND must be auto, c or python, got {choice!r}"
        )
    if choice == "python":
        return _pykern
    try:
        from . import _ckern  # type: ignore[attr-defined]

        return _ckern
    except ImportError:
        if choice == "c":
            raise BackendError(
                "compiled backend requested but the extension is not built"
            ) from None
        return _pykern


_ACTIVE = _load()
BACKEND_NAME: str = _ACTIVE.BACKEND


def get_kernels(name: str | None = None) -> ModuleType:
    """Return the active kernel module, or a specific one by name."""
    if name is None:
        return _ACTIVE
    if name == "python":
        return _pykern
    if name == "c":
        from . import _ckern  # type: ignore[attr-defined]

        return _ckern
    raise BackendError(f"unknown backend {name!r}")
