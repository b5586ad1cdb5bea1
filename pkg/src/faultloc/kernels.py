"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise (or when
``FAULTLOC_PURE_PYTHON`` is set to a non-empty value other than ``0``) the
numpy/scipy implementations are used.
"""
import os

from . import _fallback

_force_pure = os.environ.get("FAULTLOC_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

expm_batch = _impl.expm_batch
admittance_from_abcd = _impl.admittance_from_abcd
psi_apply = _impl.psi_apply
ladder_run = _impl.ladder_run

__all__ = ["BACKEND", "expm_batch", "admittance_from_abcd", "psi_apply", "ladder_run"]
