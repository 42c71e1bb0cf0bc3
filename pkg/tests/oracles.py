"""Reference computations that share no code with the package.

Everything here uses numpy's LAPACK-backed routines and plain formulas
written out by hand, so agreement with the package is meaningful.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def active_set_qp(P, G, A, theta, tol=1e-9):
    """Exact minimizer of 1/2 v'Pv + G'v s.t. Av <= theta by active-set enumeration.

    Tries every linearly independent working set, smallest first; for a
    strictly convex QP the first KKT point found is the unique optimum.
    Returns (v, multipliers) or None if no feasible KKT point exists.
    """
    P, G, A, theta = (np.asarray(x, float) for x in (P, G, A, theta))
    n, m = P.shape[0], A.shape[0]
    scale = 1.0 + np.abs(theta)
    for k in range(min(n, m) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            As = A[S]
            if k and np.linalg.matrix_rank(As) < k:
                continue
            K = np.block([[P, As.T], [As, np.zeros((k, k))]])
            rhs = np.concatenate([-G, theta[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            v, lam = sol[:n], sol[n:]
            if np.any(lam < -tol * (1 + np.abs(lam).max(initial=0))):
                continue
            if np.any(A @ v - theta > tol * scale):
                continue
            full = np.zeros(m)
            full[S] = lam
            return v, full
    return None


def box_feasible(rows_a, rows_b):
    """Feasibility of {u : a_i u <= b_i} for scalar u via interval intersection."""
    lo, hi = -math.inf, math.inf
    for a, b in zip(rows_a, rows_b):
        if a > 0:
            hi = min(hi, b / a)
        elif a < 0:
            lo = max(lo, b / a)
        elif b < 0:
            return False
    return lo <= hi


def random_qp(rng, n=None, m=None):
    """Strictly convex QP whose constraints contain a known interior point."""
    n = n or int(rng.integers(1, 6))
    m = m or int(rng.integers(1, 13))
    B = rng.normal(size=(n, n))
    P = B @ B.T + 0.1 * np.eye(n)
    G = rng.normal(scale=3.0, size=n)
    A = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    theta = A @ x0 + rng.uniform(0.1, 2.0, size=m)
    return P, G, A, theta


def steady_gap(v_f=13.89, a0=10.0, delta=0.09, r=0.01, d=(0.1, 0.1)):
    """Root of z - a0 = delta * (|(v_f, z) + d| + r) by bisection (the Theta = 0 surface)."""
    def h(z):
        return z - a0 - delta * (math.hypot(v_f + d[0], z + d[1]) + r)

    lo, hi = a0, a0 + 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def acc_ncbf(v, z, M=1650.0, a0=10.0, delta=0.09, r=0.01, d=(0.1, 0.1), v_f=13.89,
             f=(0.1, 5.0, 0.25)):
    """(Theta, L_f Theta, L_g Theta) for the ACC gap barrier, expanded by hand."""
    th = z - a0
    x1, x2 = v + d[0], z + d[1]
    N = math.sqrt(x1**2 + x2**2)
    R = N + r
    Theta = math.exp(th / R - delta) - 1.0
    c = (Theta + 1.0) / R**2
    dTheta_dv = c * (-th * x1 / N)
    dTheta_dz = c * (R - th * x2 / N)
    Fr = f[0] * (v > 0) + f[1] * v + f[2] * v * v
    lf = dTheta_dv * (-Fr / M) + dTheta_dz * (v_f - v)
    lg = dTheta_dv / M
    return Theta, lf, lg
