"""Proximal operator of the two-level SPLAM penalty.

For one block the operator solves

    argmin_z  1/2 ||z - g||^2 + r1 ||z||_2 + r2 ||z_{-1}||_2

exactly with one pass over the dual: first project the nonlinear tail onto
the ``r2`` ball, then project what remains onto the ``r1`` ball.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _prox_block_inplace(g, r1, r2, out):
    m = g.shape[0]
    if m == 0:
        return
    tail = 0.0
    for i in range(1, m):
        tail += g[i] * g[i]
    tail_norm = np.sqrt(tail)
    # u = g - [0, Pi_{r2}(g_{-1})] = [g_0, keep * g_{-1}]
    keep = 0.0 if tail_norm <= r2 else 1.0 - r2 / tail_norm
    u_norm = np.sqrt(g[0] * g[0] + keep * keep * tail)
    if u_norm <= r1:
        for i in range(m):
            out[i] = 0.0
        return
    shrink = 1.0 - r1 / u_norm
    out[0] = shrink * g[0]
    for i in range(1, m):
        out[i] = shrink * keep * g[i]


@njit(cache=True)
def _prox_blocks(g, starts, stops, blocks, r1, r2, out):
    for jj in range(blocks.shape[0]):
        j = blocks[jj]
        a = starts[j]
        b = stops[j]
        _prox_block_inplace(g[a:b], r1, r2, out[a:b])


def project_ball(u, r):
    """Euclidean projection of ``u`` onto the ball of radius ``r``."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if norm <= r:
        return u.copy()
    return (r / norm) * u


def prox_block(g, r1, r2):
    """Exact prox of ``r1 ||z|| + r2 ||z_{-1}||`` at ``g``.

    Equivalent to ``g - gamma1 - [0, gamma2]`` with
    ``gamma2 = project_ball(g[1:], r2)`` and
    ``gamma1 = project_ball(g - [0, gamma2], r1)``.
    """
    if r1 < 0 or r2 < 0:
        raise ValueError("radii must be non-negative")
    g = np.ascontiguousarray(g, dtype=float).ravel()
    out = np.empty_like(g)
    _prox_block_inplace(g, float(r1), float(r2), out)
    return out


def dual_pair(g, r1, r2):
    """The dual variables ``(gamma1, gamma2)`` for one block."""
    g = np.asarray(g, dtype=float).ravel()
    gamma2 = project_ball(g[1:], r2)
    gamma1 = project_ball(g - np.concatenate([[0.0], gamma2]), r1)
    return gamma1, gamma2


def prox_full(beta, starts, stops, lam, alpha, step=1.0):
    """Blockwise prox of ``step * lam * Omega`` over every block.

    ``starts``/``stops`` delimit the blocks inside the flat coefficient
    vector. Coordinates outside every block (an intercept, say) pass
    through unchanged.
    """
    beta = np.ascontiguousarray(beta, dtype=float)
    starts = np.asarray(starts, dtype=np.int64)
    stops = np.asarray(stops, dtype=np.int64)
    out = beta.copy()
    blocks = np.arange(starts.shape[0], dtype=np.int64)
    _prox_blocks(beta, starts, stops, blocks, step * lam * alpha,
                 step * lam * (1.0 - alpha), out)
    return out
