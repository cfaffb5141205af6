"""Kernel backend selection.

The compiled extension is used when it imports cleanly, unless the
environment variable ``CPMS_PURE_PYTHON`` is set to a non-empty value other
than ``0``.  ``BACKEND`` names the active choice; ``get_backend(name)`` returns
either implementation explicitly (used by tests and the benchmark).
"""
from __future__ import annotations

import os

from . import _fallback

try:
    from . import _core  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build
    _core = None

__all__ = ["BACKEND", "available_backends", "get_backend", "CodedProfile"]

CodedProfile = _fallback.CodedProfile


class _Backend:
    def __init__(self, name, mod):
        self.name = name
        self._mod = mod

    def fitzpatrick(self, profile, z1, z2, max_iter=200, gtol=1e-12):
        code = getattr(profile, "code", None)
        if self._mod is not None and code is not None:
            return self._mod.fitzpatrick(code, z1, z2, max_iter, gtol)
        return _fallback.fitzpatrick(profile, z1, z2, max_iter, gtol)

    def resolvent(self, profile, a, w, max_iter=200, tol=1e-12):
        code = getattr(profile, "code", None)
        if self._mod is not None and code is not None:
            return self._mod.resolvent(code, a, w, max_iter, tol)
        return _fallback.resolvent(profile, a, w, max_iter, tol)

    def hungarian(self, cost):
        if self._mod is not None:
            return self._mod.hungarian(cost)
        return _fallback.hungarian(cost)

    def interp_quintic(self, values, x0, h, points):
        if self._mod is not None:
            return self._mod.interp_quintic(values, x0, h, points)
        return _fallback.interp_quintic(values, x0, h, points)


def _forced_pure():
    flag = os.environ.get("CPMS_PURE_PYTHON", "")
    return flag not in ("", "0")


def available_backends():
    names = ["python"]
    if _core is not None:
        names.insert(0, "compiled")
    return names


def get_backend(name=None):
    if name is None:
        name = "python" if (_forced_pure() or _core is None) else "compiled"
    if name == "compiled":
        if _core is None:
            raise ImportError("compiled kernels are not built")
        return _Backend("compiled", _core)
    if name == "python":
        return _Backend("python", None)
    raise ValueError(f"unknown backend {name!r}")


BACKEND = get_backend()
