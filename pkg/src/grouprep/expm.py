"""Batched matrix exponential by scaling and squaring with Pade approximants.

Degree selection and thresholds follow Higham (2005): the lowest of degrees
3, 5, 7, 9 whose 1-norm threshold covers the matrix, otherwise degree 13
after scaling by ``2**-s``.
"""

from __future__ import annotations

import numpy as np

_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}

_B = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ),
}


def _pade(A: np.ndarray, m: int) -> np.ndarray:
    b = _B[m]
    n = A.shape[-1]
    ident = np.broadcast_to(np.eye(n), A.shape)
    A2 = A @ A
    if m == 13:
        A4 = A2 @ A2
        A6 = A4 @ A2
        U = A @ (
            A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
            + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident
        )
        V = (
            A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
            + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
        )
    else:
        powers = [ident, A2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ A2)
        U = A @ sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
        V = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
    return np.linalg.solve(V - U, V + U)


def _degree_and_scaling(norm1: float) -> tuple[int, int]:
    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            return m, 0
    s = max(0, int(np.ceil(np.log2(norm1 / _THETA[13]))))
    return 13, s


def expm(A: np.ndarray) -> np.ndarray:
    """``exp`` of a square matrix or of every matrix in a stack ``(..., n, n)``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expm needs square matrices, got shape {A.shape}")
    lead = A.shape[:-2]
    n = A.shape[-1]
    flat = A.reshape(-1, n, n)
    norms = np.abs(flat).sum(axis=-2).max(axis=-1) if n else np.zeros(len(flat))
    out = np.empty_like(flat)
    plans: dict[tuple[int, int], list[int]] = {}
    for k, nrm in enumerate(norms):
        plans.setdefault(_degree_and_scaling(float(nrm)), []).append(k)
    for (m, s), idx in plans.items():
        R = _pade(flat[idx] / (2.0**s), m)
        for _ in range(s):
            R = R @ R
        out[idx] = R
    return out.reshape(*lead, n, n)


def expm_frechet_adjoint(A: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Gradient of ``<G, exp(A)>`` with respect to ``A``.

    This is the Frechet derivative of exp at ``A^T`` in direction ``G``, read
    off the upper-right block of ``exp([[A^T, G], [0, A^T]])``.
    """
    A = np.asarray(A, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    n = A.shape[-1]
    At = np.swapaxes(A, -1, -2)
    # the derivative is linear in G; rescale G so it does not drive the scaling
    gscale = np.abs(G).sum(axis=-2).max(axis=-1, keepdims=True)[..., None]
    ascale = np.maximum(np.abs(A).sum(axis=-2).max(axis=-1, keepdims=True)[..., None], 1.0)
    alpha = np.where(gscale > 0, gscale / ascale, 1.0)
    big = np.zeros(A.shape[:-2] + (2 * n, 2 * n))
    big[..., :n, :n] = At
    big[..., n:, n:] = At
    big[..., :n, n:] = G / alpha
    return expm(big)[..., :n, n:] * alpha
