"""Compiled inner loops for the flux-form stencil and CG vector updates.

Stencil kernels take batched arrays shaped ``(B, n, ..., n)`` with periodic
wrap-around; face coefficient arrays carry one extra leading axis per
direction, ``coef[b, axis, ...]``. CG kernels work on flat ``(B, P)`` views.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def _flux_1d(coef, p, out, inv_h2, pAp):
    B, n = p.shape
    for b in range(B):
        acc = 0.0
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            im = i - 1 if i > 0 else n - 1
            c = p[b, i]
            s = coef[b, 0, i] * (p[b, ip] - c) - coef[b, 0, im] * (c - p[b, im])
            v = -s * inv_h2
            out[b, i] = v
            acc += c * v
        pAp[b] = acc


@nb.njit(cache=True, nogil=True)
def _flux_2d(coef, p, out, inv_h2, pAp):
    B, n, m = p.shape
    for b in range(B):
        acc = 0.0
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            im = i - 1 if i > 0 else n - 1
            for j in range(m):
                jp = j + 1 if j + 1 < m else 0
                jm = j - 1 if j > 0 else m - 1
                c = p[b, i, j]
                s = (
                    coef[b, 0, i, j] * (p[b, ip, j] - c)
                    - coef[b, 0, im, j] * (c - p[b, im, j])
                    + coef[b, 1, i, j] * (p[b, i, jp] - c)
                    - coef[b, 1, i, jm] * (c - p[b, i, jm])
                )
                v = -s * inv_h2
                out[b, i, j] = v
                acc += c * v
        pAp[b] = acc


@nb.njit(cache=True, nogil=True)
def _flux_3d(coef, p, out, inv_h2, pAp):
    B, n, m, q = p.shape
    for b in range(B):
        acc = 0.0
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            im = i - 1 if i > 0 else n - 1
            for j in range(m):
                jp = j + 1 if j + 1 < m else 0
                jm = j - 1 if j > 0 else m - 1
                for k in range(q):
                    kp = k + 1 if k + 1 < q else 0
                    km = k - 1 if k > 0 else q - 1
                    c = p[b, i, j, k]
                    s = (
                        coef[b, 0, i, j, k] * (p[b, ip, j, k] - c)
                        - coef[b, 0, im, j, k] * (c - p[b, im, j, k])
                        + coef[b, 1, i, j, k] * (p[b, i, jp, k] - c)
                        - coef[b, 1, i, jm, k] * (c - p[b, i, jm, k])
                        + coef[b, 2, i, j, k] * (p[b, i, j, kp] - c)
                        - coef[b, 2, i, j, km] * (c - p[b, i, j, km])
                    )
                    v = -s * inv_h2
                    out[b, i, j, k] = v
                    acc += c * v
        pAp[b] = acc


def flux_apply(coef, p, out, inv_h2, pAp):
    """out = -div(coef grad p); pAp[b] = <p_b, out_b> without quadrature weight."""
    d = p.ndim - 1
    if d == 1:
        _flux_1d(coef, p, out, inv_h2, pAp)
    elif d == 2:
        _flux_2d(coef, p, out, inv_h2, pAp)
    else:
        _flux_3d(coef, p, out, inv_h2, pAp)


def face_coefficients(u):
    """Geometric-mean face coefficients exp((u_j + u_{j+e})/2), shape (B, d, ...)."""
    d = u.ndim - 1
    coef = np.empty((u.shape[0], d) + u.shape[1:])
    for axis in range(d):
        np.add(u, np.roll(u, -1, axis=axis + 1), out=coef[:, axis])
    coef *= 0.5
    np.exp(coef, out=coef)
    return coef


@nb.njit(cache=True, nogil=True)
def cg_update(x, r, p, Ap, alpha, active, rr):
    """x += alpha p; r -= alpha Ap; rr[b] = |r_b|^2, for active batch members only."""
    B, P = x.shape
    for b in range(B):
        if not active[b]:
            continue
        a = alpha[b]
        acc = 0.0
        for j in range(P):
            x[b, j] += a * p[b, j]
            rj = r[b, j] - a * Ap[b, j]
            r[b, j] = rj
            acc += rj * rj
        rr[b] = acc


@nb.njit(cache=True, nogil=True)
def cg_direction(p, z, r, rz_old, active, rz_new, zz):
    """rz_new = <r, z>; p = z + (rz_new / rz_old) p; zz[b] = |z_b|^2, active only."""
    B, P = p.shape
    for b in range(B):
        if not active[b]:
            continue
        rz = 0.0
        zsq = 0.0
        for j in range(P):
            rz += r[b, j] * z[b, j]
            zsq += z[b, j] * z[b, j]
        beta = rz / rz_old[b]
        for j in range(P):
            p[b, j] = z[b, j] + beta * p[b, j]
        rz_new[b] = rz
        zz[b] = zsq
