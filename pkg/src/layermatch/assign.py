"""Assignment solver backend selection.

The compiled kernel (layermatch._assign_cy, built from Cython) is used
when importable; otherwise the pure-Python solver takes over. Both
implement the identical algorithm and return identical results. Set
LAYERMATCH_ASSIGN=python or LAYERMATCH_ASSIGN=compiled to force one.
"""

from __future__ import annotations

import os

from . import _assign_py

try:
    from . import _assign_cy
except ImportError:
    _assign_cy = None

_ENV_VAR = "LAYERMATCH_ASSIGN"


def available_backends() -> tuple[str, ...]:
    return ("python",) if _assign_cy is None else ("compiled", "python")


def get_backend(name: str):
    """Return the module implementing solve/solve_batch for `name`."""
    if name == "python":
        return _assign_py
    if name == "compiled":
        if _assign_cy is None:
            raise RuntimeError(
                "compiled assignment kernel is not available in this install"
            )
        return _assign_cy
    raise ValueError(f"unknown assignment backend {name!r}")


def _select() -> str:
    forced = os.environ.get(_ENV_VAR, "").strip().lower()
    if forced in ("python", "compiled"):
        get_backend(forced)  # fail fast if forced but unavailable
        return forced
    if forced not in ("", "auto"):
        raise RuntimeError(
            f"{_ENV_VAR} must be 'python', 'compiled', or 'auto', got {forced!r}"
        )
    return "compiled" if _assign_cy is not None else "python"


_ACTIVE = _select()


def backend_name() -> str:
    """Name of the backend answering solve/solve_batch calls."""
    return _ACTIVE


def solve(cost):
    return get_backend(_ACTIVE).solve(cost)


def solve_batch(costs):
    return get_backend(_ACTIVE).solve_batch(costs)
