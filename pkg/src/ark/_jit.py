"""Optional numba acceleration; falls back to plain Python when unavailable."""

from __future__ import annotations

import os

try:
    if os.environ.get("ARK_NO_JIT"):
        raise ImportError
    from numba import njit as _njit
except ImportError:  # pragma: no cover - exercised only without numba
    _njit = None


def njit(fn=None, **kwargs):
    kwargs.setdefault("cache", True)
    if _njit is None:
        return fn if fn is not None else (lambda f: f)
    if fn is None:
        return _njit(**kwargs)
    return _njit(**kwargs)(fn)
