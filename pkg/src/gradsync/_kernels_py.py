"""Pure numpy fallback kernel.

Mirrors gradsync._kernels (the Cython extension) step for step: same
RK4 tableau, same Newton-Schulz retraction, same check ordering, so
the two backends classify identically up to float summation order.

The integrated field is the tangent projection of the weighted
neighbor difference sum,

    K_i = Pi_{X_i}( sum_j w_ij (X_j - X_i) ),

optionally doubled (the orthogonal-group flow).  On the manifold this
coincides with the extrinsic, const-norm and stiefel-canonical right-
hand sides, which differ from each other only off-manifold.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"

OUTCOME_CONSENSUS = 0
OUTCOME_STALL = 1
OUTCOME_HORIZON = 2
OUTCOME_BLOWUP = 3


def _rhs(x, ei, ej, w, factor2):
    d = w[:, None, None] * (x[ej] - x[ei])
    acc = np.zeros_like(x)
    np.add.at(acc, ei, d)
    np.add.at(acc, ej, -d)
    b = x.transpose(0, 2, 1) @ acc
    k = acc - x @ ((b + b.transpose(0, 2, 1)) / 2.0)
    if factor2:
        k *= 2.0
    return k


def _retract(x):
    p = x.shape[2]
    eye = np.eye(p)
    for _ in range(3):
        g = x.transpose(0, 2, 1) @ x
        x = x @ (1.5 * eye - 0.5 * g)
    return x


def _half_max_edge(x, ei, ej):
    if ei.shape[0] == 0:
        return 0.0
    d = x[ei] - x[ej]
    return 0.5 * float(np.max(np.sqrt(np.sum(d * d, axis=(1, 2)))))


def _max_agent_norm(k):
    return float(np.max(np.sqrt(np.sum(k * k, axis=(1, 2)))))


def integrate_orthonormal(x0, ei, ej, w, step, n_steps, eps, stall_tol, factor2):
    """Fixed-step RK4 with polar retraction on orthonormal-column stacks.

    Returns (final stack, outcome code, steps taken).  Outcomes:
    0 consensus (half the max edge chord < eps), 1 stall (max agent
    rhs norm < stall_tol), 2 horizon exhausted, 3 numerical blow-up.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    ei = np.asarray(ei, dtype=np.int64)
    ej = np.asarray(ej, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    factor2 = bool(factor2)

    if _half_max_edge(x, ei, ej) < eps:
        return x, OUTCOME_CONSENSUS, 0

    steps = 0
    outcome = OUTCOME_HORIZON
    for it in range(int(n_steps)):
        k1 = _rhs(x, ei, ej, w, factor2)
        if _max_agent_norm(k1) < stall_tol:
            outcome = OUTCOME_STALL
            break
        k2 = _rhs(x + (0.5 * step) * k1, ei, ej, w, factor2)
        k3 = _rhs(x + (0.5 * step) * k2, ei, ej, w, factor2)
        k4 = _rhs(x + step * k3, ei, ej, w, factor2)
        x = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x = _retract(x)
        steps = it + 1
        half = _half_max_edge(x, ei, ej)
        if not np.isfinite(half) or half > 1e100:
            outcome = OUTCOME_BLOWUP
            break
        if half < eps:
            outcome = OUTCOME_CONSENSUS
            break
    return x, outcome, steps
