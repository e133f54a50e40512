"""Integrator kernel backend selection.

Two interchangeable kernels implement the Monte Carlo stepping loop:
gradsync._kernels (Cython extension, releases the GIL) and
gradsync._kernels_py (pure numpy twin).  The compiled one is picked
when importable; set GRADSYNC_BACKEND=pure|compiled|auto to override.

The kernels handle the flows whose right-hand side reduces on the
manifold to the projected neighbor difference field: extrinsic,
extrinsic-constnorm and stiefel on orthonormal-column kinds, plus
orthogonal (the same field doubled) on o:n/so:n.  Everything else
integrates through the pure reference loop in gradsync.integrate.
"""

from __future__ import annotations

import os

from .errors import ConfigError
from .flows import FlowKind
from .manifolds import ManifoldKind

OUTCOME_CONSENSUS = 0
OUTCOME_STALL = 1
OUTCOME_HORIZON = 2
OUTCOME_BLOWUP = 3

_requested = os.environ.get("GRADSYNC_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "compiled", "pure"):
    raise ConfigError(
        f"GRADSYNC_BACKEND must be auto, compiled or pure, got {_requested!r}"
    )

if _requested == "pure":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise ConfigError(
                "GRADSYNC_BACKEND=compiled but the Cython extension is not built"
            ) from None
        from . import _kernels_py as _impl

BACKEND: str = _impl.BACKEND_NAME
integrate_orthonormal = _impl.integrate_orthonormal


def get_backend(name: str):
    """Return a specific kernel module ("compiled" or "pure").

    Used by the benchmark and the backend-equivalence tests; raises
    ConfigError if the compiled extension is unavailable.
    """
    if name == "pure":
        from . import _kernels_py

        return _kernels_py
    if name == "compiled":
        try:
            from . import _kernels  # type: ignore[attr-defined]
        except ImportError:
            raise ConfigError("compiled kernel is not built") from None
        return _kernels
    raise ConfigError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    out = ["pure"]
    try:
        get_backend("compiled")
        out.insert(0, "compiled")
    except ConfigError:
        pass
    return out


def kernel_mode(flow: FlowKind, kind: ManifoldKind):
    """factor2 flag for kernel-eligible (flow, kind) pairs, else None."""
    if kind.family == "torus":
        return None
    if flow in (FlowKind.EXTRINSIC, FlowKind.EXTRINSIC_CONSTNORM, FlowKind.STIEFEL_CANONICAL):
        return False
    if flow == FlowKind.ORTHOGONAL_GROUP and kind.family in ("so", "o"):
        return True
    return None
