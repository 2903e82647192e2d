"""Pure numpy implementation of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Fields are passed as C-contiguous float64 arrays of shape ``(nx, ny)``; 1-D
grids use ``ny == 1`` and ``cy == 0``.
"""
import numpy as np

NAME = "python"


def apply_operator(u, mass, cx, cy, diag, out):
    """out = (mass + diag) * u + (two-point Neumann stencil) u."""
    np.multiply(mass + diag, u, out=out)
    if u.shape[0] > 1:
        d = cx * (u[1:, :] - u[:-1, :])
        out[:-1, :] -= d
        out[1:, :] += d
    if u.shape[1] > 1:
        d = cy * (u[:, 1:] - u[:, :-1])
        out[:, :-1] -= d
        out[:, 1:] += d
    return out


def cr_solve(rhs, x, mass, cx, cy, diag, tol, maxiter):
    """Conjugate-residual iteration for the SPD system, updating ``x`` in place.

    Returns ``(iterations, residual_norms)``; the first norm is the initial
    residual. Stops once ``||r|| <= tol * ||rhs||``.
    """
    bnorm = np.sqrt(np.vdot(rhs, rhs))
    history = np.empty(maxiter + 1)
    if bnorm == 0.0:
        x[...] = 0.0
        history[0] = 0.0
        return 0, history[:1]
    target = tol * bnorm
    ar = np.empty_like(rhs)
    r = rhs - apply_operator(x, mass, cx, cy, diag, ar)
    rnorm = np.sqrt(np.vdot(r, r))
    history[0] = rnorm
    if rnorm <= target:
        return 0, history[:1]
    apply_operator(r, mass, cx, cy, diag, ar)
    p = r.copy()
    ap = ar.copy()
    rar = np.vdot(r, ar)
    for it in range(1, maxiter + 1):
        alpha = rar / np.vdot(ap, ap)
        x += alpha * p
        r -= alpha * ap
        rnorm = np.sqrt(np.vdot(r, r))
        history[it] = rnorm
        if rnorm <= target:
            return it, history[: it + 1]
        apply_operator(r, mass, cx, cy, diag, ar)
        rar_new = np.vdot(r, ar)
        beta = rar_new / rar
        rar = rar_new
        p *= beta
        p += r
        ap *= beta
        ap += ar
    return -1, history


def project_triangle(b1, b2, o1, o2):
    """Cellwise Euclidean projection onto {b1 >= 0, b2 >= 0, b1 + b2 <= 1}."""
    over = (b1 + b2) > 1.0
    t = np.clip(0.5 * (b1 - b2 + 1.0), 0.0, 1.0)
    x = np.where(over, t, np.where(b2 < 0.0, np.clip(b1, 0.0, 1.0), np.maximum(b1, 0.0)))
    y = np.where(over, 1.0 - t, np.where(b1 < 0.0, np.clip(b2, 0.0, 1.0), np.maximum(b2, 0.0)))
    # b1 < 0 and b2 < 0 gives the origin through both branches above
    o1[...] = x
    o2[...] = y
    return o1, o2
