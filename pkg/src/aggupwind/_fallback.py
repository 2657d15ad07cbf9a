"""Pure numpy/scipy versions of the compiled kernels.

Same signatures and semantics as ``_kernels``; used when the extension is
not built or when ``AGGUPWIND_PURE=1`` is set.
"""

import numpy as np
from scipy import signal


def grid_convolve(rho, tables, support, targets):
    rho = np.ascontiguousarray(rho, dtype=float)
    nc = tables.shape[0]
    out = np.empty((nc, len(targets)))
    # direct summation keeps the exact double sum (no FFT)
    for c in range(nc):
        full = signal.convolve(tables[c], rho, mode="valid", method="direct")
        out[c] = full.reshape(-1)[targets]
    return out


def pair_velocity(targets, sources, masses, code, param):
    from .potential import Potential, KIND_CODES

    kind = {v: k for k, v in KIND_CODES.items()}[code]
    pot = Potential(kind, param, max_dim=None)
    targets = np.asarray(targets, dtype=float)
    sources = np.asarray(sources, dtype=float)
    out = np.zeros_like(targets)
    block = max(1, 1_000_000 // max(len(sources), 1))
    for start in range(0, len(targets), block):
        diff = targets[start:start + block, None, :] - sources[None, :, :]
        out[start:start + block] = -np.einsum("l,tli->ti", masses, pot.grad_hat(diff))
    return out
