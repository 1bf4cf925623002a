"""
Wasserstein-2 distance between uniform empirical measures of equal size
"""

import itertools
import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import NegativeCycleError, bellman_ford, csgraph_from_dense, maximum_bipartite_matching
from scipy.special import logsumexp

from .errors import ConvergenceError, DimensionError, SolverLimitError
from .models import EmpiricalMeasure
from .utils import compensated_sum

logger = logging.getLogger(__name__)

EXACT_CUTOFF = 512
BRUTEFORCE_CUTOFF = 8

MATCH_TIE_TOL = 1e-10

SINKHORN_MAX_ITER = 1000
# L1 row-marginal residual, relative to the unit total mass
SINKHORN_TOL = 1e-6
SINKHORN_CHECK_EVERY = 10

MeasureLike = Union[EmpiricalMeasure, np.ndarray]


def _measure(m: MeasureLike) -> EmpiricalMeasure:
    return m if isinstance(m, EmpiricalMeasure) else EmpiricalMeasure(m)


def _pair(A: MeasureLike, B: MeasureLike) -> Tuple[np.ndarray, np.ndarray]:
    A, B = _measure(A), _measure(B)
    if A.n != B.n:
        raise DimensionError(f"measures have {A.n} and {B.n} atoms; only equal sizes are supported")
    if A.dim != B.dim:
        raise DimensionError(f"atoms live in R^{A.dim} and R^{B.dim}")
    return A.atoms, B.atoms


def cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean costs, coordinates summed with compensation"""
    diff = a[:, None, :] - b[None, :, :]
    return compensated_sum(diff * diff, axis=-1)


def _tight_edges(C: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Edges with zero reduced cost; every optimal permutation uses only these.

    Column potentials are shortest-path distances in the exchange graph of an
    optimal permutation (column k -> j costs C[row(k), j] - C[row(k), k]).
    """
    n = C.shape[0]
    owner = np.argsort(perm)
    graph = np.full((n + 1, n + 1), np.inf)
    graph[:n, :n] = C[owner, :] - C[owner, np.arange(n)][:, None]
    graph[n, :n] = 0.0
    v = bellman_ford(csgraph_from_dense(graph, null_value=np.inf), indices=n)[:n]
    u = C[np.arange(n), perm] - v[perm]
    tol = MATCH_TIE_TOL * max(float(C.max()), 1.0)
    return C - u[:, None] - v[None, :] <= tol


def _complete(tight: np.ndarray, taken: np.ndarray, start: int) -> Optional[np.ndarray]:
    """Perfect matching of rows start.. onto the free columns using tight edges, or None"""
    free = np.flatnonzero(~taken)
    sub = csr_matrix(tight[start:][:, free], dtype=np.int8)
    cols = maximum_bipartite_matching(sub, perm_type='column')
    if np.any(cols < 0):
        return None
    return free[cols]


def _lexicographic(C: np.ndarray, perm: np.ndarray) -> np.ndarray:
    n = C.shape[0]
    try:
        tight = _tight_edges(C, perm)
    except NegativeCycleError:
        # rounding in near-tied costs; keep the solver's optimum
        logger.debug("reduced costs are inconsistent at rounding level, skipping the tie-break")
        return perm
    perm = perm.copy()
    taken = np.zeros(n, dtype=bool)
    for i in range(n - 1):
        for j in np.flatnonzero(tight[i] & ~taken):
            if j >= perm[i]:
                break
            taken[j] = True
            rest = _complete(tight, taken, i + 1)
            taken[j] = False
            if rest is not None:
                perm[i] = j
                perm[i + 1:] = rest
                break
        taken[perm[i]] = True
    return perm


def matching(A: MeasureLike, B: MeasureLike, capped: bool = True) -> np.ndarray:
    """Optimal permutation pi, atom i of A is sent to atom pi[i] of B.

    Ties go to the lexicographically smallest optimal permutation. capped=False
    lifts the EXACT_CUTOFF limit, for alignment of wide networks.
    """
    a, b = _pair(A, B)
    if capped and a.shape[0] > EXACT_CUTOFF:
        raise SolverLimitError(f"exact matching is limited to {EXACT_CUTOFF} atoms, got {a.shape[0]}; use w2_approx")
    C = cost_matrix(a, b)
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(a.shape[0], dtype=np.intp)
    perm[rows] = cols
    return _lexicographic(C, perm)


def _matched_value(a: np.ndarray, b: np.ndarray, perm) -> float:
    costs = cost_matrix(a, b)[np.arange(a.shape[0]), np.asarray(perm)]
    return math.sqrt(math.fsum(costs) / a.shape[0])


def w2_exact(A: MeasureLike, B: MeasureLike) -> float:
    """sqrt(min_pi (1/n) sum_i ||a_i - b_pi(i)||^2) by exact assignment"""
    a, b = _pair(A, B)
    return _matched_value(a, b, matching(a, b))


def w2_bruteforce(A: MeasureLike, B: MeasureLike) -> float:
    """Minimum over all n! permutations"""
    a, b = _pair(A, B)
    n = a.shape[0]
    if n > BRUTEFORCE_CUTOFF:
        raise ValueError(f"brute force is limited to {BRUTEFORCE_CUTOFF} atoms, got {n}")
    costs = cost_matrix(a, b)
    best = min(math.fsum(costs[i, p] for i, p in enumerate(perm)) for perm in itertools.permutations(range(n)))
    return math.sqrt(best / n)


def _sinkhorn_log(C: np.ndarray, reg: float, f: np.ndarray, g: np.ndarray, max_iter: int, tol: float):
    """Log-domain iterations until the L1 row-marginal residual drops below tol.

    Returns the potentials, the iteration count and the last residual.
    """
    n = C.shape[0]
    log_w = -math.log(n)
    err = math.inf
    for it in range(1, max_iter + 1):
        f = reg * (log_w - logsumexp((g[None, :] - C) / reg, axis=1))
        g = reg * (log_w - logsumexp((f[:, None] - C) / reg, axis=0))
        if it % SINKHORN_CHECK_EVERY == 0 or it == max_iter:
            P = np.exp((f[:, None] + g[None, :] - C) / reg)
            err = float(np.abs(P.sum(axis=1) - 1.0 / n).sum())
            if err < tol:
                return f, g, it, err
    return f, g, max_iter, err


def round_to_feasible(P: np.ndarray) -> np.ndarray:
    """Project a near-feasible plan onto the uniform transport polytope"""
    n = P.shape[0]
    w = np.full(n, 1.0 / n)
    rows = P.sum(axis=1)
    P = P * np.minimum(w / np.where(rows > 0, rows, 1.0), 1.0)[:, None]
    cols = P.sum(axis=0)
    P = P * np.minimum(w / np.where(cols > 0, cols, 1.0), 1.0)[None, :]
    err_r = w - P.sum(axis=1)
    err_c = w - P.sum(axis=0)
    mass = err_r.sum()
    if mass > 0:
        P = P + np.outer(err_r, err_c) / mass
    return P


def w2_approx(A: MeasureLike, B: MeasureLike, reg: float = 1e-3, max_iter: Optional[int] = None,
              tol: float = SINKHORN_TOL, strict: bool = False) -> Tuple[float, bool]:
    """Entropic transport value after rounding the plan to a feasible one.

    reg is relative to the largest pairwise cost and max_iter applies per
    stage. The rounded plan is feasible, so its cost is an upper bound on W2^2
    even when the last stage stops early; the flag is always True. strict=True
    raises ConvergenceError instead of rounding an unconverged iterate.
    """
    if not reg > 0:
        raise ValueError(f"reg must be > 0, got {reg}")
    max_iter = SINKHORN_MAX_ITER if max_iter is None else max_iter
    a, b = _pair(A, B)
    C = cost_matrix(a, b)
    scale = float(C.max())
    if scale == 0:
        return 0.0, True
    Cn = C / scale
    f = np.zeros(a.shape[0])
    g = np.zeros(a.shape[0])
    # epsilon scaling, warm started
    stages = [r for r in (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5) if r > reg] + [reg]
    for r in stages:
        f, g, iterations, err = _sinkhorn_log(Cn, r, f, g, max_iter, tol)
        if err < tol:
            logger.debug("sinkhorn reg=%g converged in %d iterations", r, iterations)
        elif r != reg:
            logger.debug("sinkhorn reg=%g stopped at residual %.3e, warm starting the next stage", r, err)
        elif strict:
            raise ConvergenceError(f"Sinkhorn did not converge at reg={r:g}", iterations=iterations, residual=err)
        else:
            logger.warning("Sinkhorn stopped at reg=%g after %d iterations (residual %.3e), rounding the last iterate",
                           r, iterations, err)
    P = round_to_feasible(np.exp((f[:, None] + g[None, :] - Cn) / reg))
    value = float(np.sum(P * C))
    return math.sqrt(max(value, 0.0)), True


def wasserstein2(A: MeasureLike, B: MeasureLike, reg: float = 1e-3) -> Tuple[float, bool]:
    """Exact value up to the cutoff, the flagged upper bound above it"""
    n = _measure(A).n
    if n <= EXACT_CUTOFF:
        return w2_exact(A, B), False
    logger.warning("W2 with %d atoms exceeds the exact cutoff %d, using the entropic upper bound",
                   n, EXACT_CUTOFF)
    return w2_approx(A, B, reg=reg)
