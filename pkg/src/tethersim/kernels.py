"""Backend selection for the per-step kernels.

The compiled extension is used when it imports; setting the environment
variable ``TETHERSIM_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

KL = _pykernels.KL
KU = _pykernels.KU


def pack_params(params) -> np.ndarray:
    """Flatten PhysParams into the float vector the kernels consume."""
    return np.concatenate([
        [params.m, params.m_r, params.m_s, params.mu_bar, params.EA, params.GM,
         params.kappa2, params.L, params.h, float(params.N), params.d, params.b],
        params.J_d.ravel(), params.J_sd.ravel(), params.rho_s,
    ]).astype(float)


def _load():
    if os.environ.get("TETHERSIM_PURE_PYTHON", "") not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load()

potential = _impl.potential
kinetic = _impl.kinetic
kinetic_jacobian = _impl.kinetic_jacobian
solve_bordered = _impl.solve_bordered
dense_to_bordered = _pykernels.dense_to_bordered
bordered_to_dense = _pykernels.bordered_to_dense


def backend_module(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"`` explicitly."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
