"""Pure-Python cascade kernel; reference for the compiled version."""

from math import comb, sqrt

import numpy as np


def cascade_kernel(e0, phi, guard):
    """Propagate the error/gain cascade in raw-derivative jet arithmetic.

    e0    (r, p) array, row j = j-th derivative of e_0
    phi   (r, r) array, phi[i, j] = j-th derivative of the i-th funnel function
    guard distance below 1 at which a margin counts as a funnel violation

    Returns ``(e_values (r, p), gains (r,), margins (r,), bad)`` where ``bad``
    is the first violating level or -1.
    """
    e0 = np.asarray(e0, dtype=float)
    phi = np.asarray(phi, dtype=float)
    r, p = e0.shape
    e_values = np.zeros((r, p))
    gains = np.ones(r)
    margins = np.zeros(r)
    E = e0.copy()
    for i in range(r):
        nc = r - i
        f = phi[i, :nc]
        nsq = np.empty(nc)
        phisq = np.empty(nc)
        for j in range(nc):
            nsq[j] = sum(comb(j, l) * float(E[l] @ E[j - l]) for l in range(j + 1))
            phisq[j] = sum(comb(j, l) * f[l] * f[j - l] for l in range(j + 1))
        M = np.array([sum(comb(j, l) * phisq[l] * nsq[j - l] for l in range(j + 1)) for j in range(nc)])
        margin = sqrt(max(M[0], 0.0))
        e_values[i] = E[0]
        margins[i] = margin
        if margin >= 1.0 - guard:
            return e_values, gains, margins, i
        D = -M
        D[0] = 1.0 - M[0]
        K = np.empty(nc)
        K[0] = 1.0 / D[0]
        for j in range(1, nc):
            K[j] = -sum(comb(j, l) * D[l] * K[j - l] for l in range(1, j + 1)) / D[0]
        gains[i] = K[0]
        if i < r - 1:
            En = np.empty((nc - 1, p))
            for j in range(nc - 1):
                En[j] = E[j + 1] + sum(comb(j, l) * K[l] * E[j - l] for l in range(j + 1))
            E = En
    return e_values, gains, margins, -1
