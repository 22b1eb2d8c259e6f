"""Matrix view of the anchored overlap scheme.

Stacking the m worker models and the anchor as columns of X in
R^{d x (m+1)} turns one step of the scheme into X <- (X - eta G) W, where W
is the identity off sync steps and a fixed column-stochastic mixing matrix P
at sync steps.  P admits a PageRank-style split into a sparse averaging part
and a rank-one teleport part, and its deviation from its rank-one limit
v 1^T contracts consensus; both objects are exposed here together with a
reference driver used to cross-check the per-node implementation.
"""

from __future__ import annotations

import numpy as np

from .core import HyperParams, split_rng

__all__ = [
    "build_P",
    "fixed_vector",
    "spectral_deviation",
    "pagerank_decompose",
    "matrix_step",
    "virtual_point",
    "stack_state",
    "run_matrix_reference",
]

# Problems stay small; anything at or below this order gets an exact SVD.
_SVD_LIMIT = 64
_POWER_TOL = 1e-12
_POWER_MAX_ITERS = 10_000


def build_P(m: int, alpha: float) -> np.ndarray:
    """Mixing matrix applied at sync steps, acting on stacked columns
    [x_1 .. x_m, z].

    Worker columns blend (1 - alpha) of the worker with alpha of the anchor;
    the anchor column averages the workers with weight (1 - alpha) and keeps
    alpha of itself.  Every column sums to one.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    P = np.zeros((m + 1, m + 1))
    P[:m, :m] = (1.0 - alpha) * np.eye(m)
    P[:m, m] = (1.0 - alpha) / m
    P[m, :m] = alpha
    P[m, m] = alpha
    return P


def fixed_vector(m: int, alpha: float) -> np.ndarray:
    """Right fixed vector v of P (P v = v): (1 - alpha)/m on workers, alpha
    on the anchor.  Products of sync and identity steps preserve it, which is
    what makes the virtual point X v evolve like plain SGD."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    v = np.full(m + 1, (1.0 - alpha) / m)
    v[m] = alpha
    return v


def _power_sigma_max(M: np.ndarray) -> float:
    # Largest singular value via power iteration on M^T M with a fixed
    # pseudo-random start so results are reproducible.
    n = M.shape[1]
    B = M.T @ M
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(0x5EED)))
    x = gen.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(_POWER_MAX_ITERS):
        y = B @ x
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        x = y / norm_y
        lam = float(x @ (B @ x))
        residual = float(np.linalg.norm(B @ x - lam * x))
        if residual <= _POWER_TOL * max(lam, 1.0):
            return float(np.sqrt(max(lam, 0.0)))
    raise RuntimeError(
        f"power iteration did not converge in {_POWER_MAX_ITERS} iterations; "
        f"last residual {residual:.3e}"
    )


def spectral_deviation(P: np.ndarray, v: np.ndarray) -> float:
    """Operator 2-norm of P - v 1^T, the contraction factor of consensus.

    For the matrices built here it never exceeds 1 - alpha.  Small problems
    use an exact SVD; larger ones fall back to power iteration and raise if
    the iteration stalls.
    """
    P = np.asarray(P, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = P.shape[0]
    if P.shape != (n, n) or v.shape != (n,):
        raise ValueError(f"incompatible shapes {P.shape} and {v.shape}")
    M = P - np.outer(v, np.ones(n))
    if n <= _SVD_LIMIT:
        return float(np.linalg.svd(M, compute_uv=False)[0])
    return _power_sigma_max(M)


def pagerank_decompose(P: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Split P as (1 - alpha) A + alpha b 1^T with A the plain
    worker-keep/anchor-average matrix and b the anchor indicator.

    Raises if the reconstruction misses any entry by more than 1e-15, which
    guards against P matrices that were not built by build_P.
    """
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    m = n - 1
    if m < 1 or P.shape != (n, n):
        raise ValueError(f"P must be square of order >= 2, got {P.shape}")
    A = np.zeros((n, n))
    A[:m, :m] = np.eye(m)
    A[:m, m] = 1.0 / m
    b = np.zeros(n)
    b[m] = 1.0
    recon = (1.0 - alpha) * A + alpha * np.outer(b, np.ones(n))
    err = float(np.max(np.abs(recon - P)))
    if err > 1e-15:
        raise ValueError(f"P does not match the decomposition, max error {err:.3e}")
    return A, b


def matrix_step(X: np.ndarray, G: np.ndarray, W: np.ndarray, eta: float) -> np.ndarray:
    """One stacked step (X - eta G) W.  The anchor takes no gradient, so G's
    last column must be exactly zero."""
    X = np.asarray(X, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    if X.shape != G.shape:
        raise ValueError(f"X and G shapes differ: {X.shape} vs {G.shape}")
    if W.shape != (X.shape[1], X.shape[1]):
        raise ValueError(f"W shape {W.shape} incompatible with X {X.shape}")
    if np.any(G[:, -1] != 0.0):
        raise ValueError("anchor column of G must be zero")
    return (X - eta * G) @ W


def virtual_point(X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Weighted combination X v of workers and anchor; with the fixed vector
    this is the sequence the convergence analysis tracks."""
    X = np.asarray(X, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if X.shape[1] != v.shape[0]:
        raise ValueError(f"X columns {X.shape[1]} != v length {v.shape[0]}")
    return X @ v


def stack_state(workers: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Stack (m, d) worker rows and the anchor into the (d, m+1) matrix form."""
    return np.column_stack([workers.T, anchor])


def run_matrix_reference(hp: HyperParams, ensemble, init: np.ndarray) -> np.ndarray:
    """Drive the anchored overlap scheme purely through matrix_step.

    Consumes the same per-worker noise streams as the per-node driver, so
    the two trajectories agree up to floating-point roundoff.  Returns the
    (K+1, d, m+1) stacked states including the initial one.
    """
    if isinstance(hp.eta, str):
        raise ValueError("resolve eta to a number before running the reference")
    m, d, tau, eta = hp.m, hp.d, hp.tau, float(hp.eta)
    X = np.column_stack([np.tile(init, (m, 1)).T, init.copy()])
    P = build_P(m, hp.alpha)
    root = hp.root_stream()
    gens = [split_rng(root, i, "noise").generator() for i in range(m)]
    states = np.empty((hp.K + 1, d, m + 1))
    states[0] = X
    for k in range(hp.K):
        G = np.zeros((d, m + 1))
        for i in range(m):
            G[:, i] = ensemble.stochastic_grad(i, X[:, i], gens[i])
        if (k + 1) % tau == 0:
            X = matrix_step(X, G, P, eta)
        else:
            X = X - eta * G
        states[k + 1] = X
    return states
