"""ADMM solver for the real-time sparse + temporally homogeneous network
objective

    f(Theta) = -log det Theta + trace(S_t Theta)
               + l1*||Theta||_1 + l2*||Theta - Theta_prev||_1

split over an auxiliary variable Z (Theta = Z at convergence) with scaled
dual U.  Iterates:

    Theta-step: eigendecompose S - (Z - U) = V diag(d) V', set
                Theta = V diag((-d + sqrt(d^2 + 4))/2) V'
    Z-step:     entrywise argmin of 1/2 (a - x)^2 + l1|x| + l2|x - b|
                with a = (Theta + U)_{kl}, b = (Theta_prev)_{kl}
    U-step:     U += Theta - Z

stopping when ||Theta - Z||_F^2 < eps and ||Z - Z_prev||_F^2 < eps.

The scalar Z-step is solved exactly by enumerating the finite candidate
set {0, b, a +- l1 +- l2}: the objective is convex piecewise quadratic
with breakpoints at 0 and b, so its minimizer is either a stationary
point of one piece or a breakpoint.  Sparsity therefore comes out as
exact zeros in Z, and the edge set is read off Z, not Theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolverConfig:
    lambda1: float = 0.1
    lambda2: float = 0.1
    epsilon: float = 1e-4
    max_iters: int = 500
    zero_tol: float = 1e-8
    penalize_diagonal: bool = True

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class NetworkEstimate:
    Theta: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    iterations_used: int
    converged: bool
    objective: float


def theta_step(S, Z, U):
    """Positive-definite minimizer of -log det T + tr(S T) + 1/2||T - Z + U||^2."""
    M = S - (Z - U)
    M = 0.5 * (M + M.T)
    try:
        d, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("eigendecomposition failed in theta step") from exc
    theta = 0.5 * (-d + np.sqrt(d * d + 4.0))
    return (V * theta) @ V.T


def z_step_scalar(a, b, lambda1, lambda2):
    """argmin_x 1/2 (a - x)^2 + lambda1|x| + lambda2|x - b|.

    Ties break toward smaller |x|, then toward b.
    """
    best = 0.0
    best_f = 0.5 * a * a + lambda2 * abs(b)
    for x in (b, a - lambda1 - lambda2, a - lambda1 + lambda2,
              a + lambda1 - lambda2, a + lambda1 + lambda2):
        f = 0.5 * (a - x) ** 2 + lambda1 * abs(x) + lambda2 * abs(x - b)
        if f < best_f or (f == best_f and
                          (abs(x) < abs(best) or
                           (abs(x) == abs(best) and abs(x - b) < abs(best - b)))):
            best, best_f = x, f
    return best


def _z_step_matrix(A, B, lambda1, lambda2, penalize_diagonal):
    """Vectorized z_step_scalar over all entries of A (candidates stacked)."""
    p = A.shape[0]
    L1 = np.full((p, p), lambda1)
    if not penalize_diagonal:
        np.fill_diagonal(L1, 0.0)
    cands = np.stack([np.zeros_like(A), B, A - L1 - lambda2, A - L1 + lambda2,
                      A + L1 - lambda2, A + L1 + lambda2])
    obj = 0.5 * (A - cands) ** 2 + L1 * np.abs(cands) + lambda2 * np.abs(cands - B)
    # lexsort returns the last key as primary: objective, then |x|, then |x-b|;
    # stable order makes exact ties deterministic.
    order = np.lexsort((np.abs(cands - B), np.abs(cands), obj), axis=0)
    return np.take_along_axis(cands, order[:1], axis=0)[0]


def z_step(Theta, U, Theta_prev, cfg):
    """Entrywise fused soft-threshold of Theta + U toward 0 and Theta_prev."""
    A = Theta + U
    A = 0.5 * (A + A.T)
    Z = _z_step_matrix(A, Theta_prev, cfg.lambda1, cfg.lambda2,
                       cfg.penalize_diagonal)
    return 0.5 * (Z + Z.T)


def objective_value(S, Theta_prev, cfg, Z):
    """Value of the streaming objective at Z; +inf if Z is not PD."""
    sign, logdet = np.linalg.slogdet(Z)
    if sign <= 0:
        return np.inf
    l1_term = np.abs(Z).sum()
    if not cfg.penalize_diagonal:
        l1_term -= np.abs(np.diag(Z)).sum()
    return float(-logdet + np.sum(S * Z) + cfg.lambda1 * l1_term
                 + cfg.lambda2 * np.abs(Z - Theta_prev).sum())


def solve(S, Theta_prev, cfg, warm=None):
    """Run ADMM to estimate the network at the current time point.

    Cold start is Theta = I, Z = U = 0; a warm NetworkEstimate restarts
    from its (Theta, Z, U) triple.  Non-convergence within max_iters
    returns the last iterate with converged=False.
    """
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    if warm is None:
        Theta = np.eye(p)
        Z = np.zeros((p, p))
        U = np.zeros((p, p))
    else:
        Theta = warm.Theta.copy()
        Z = warm.Z.copy()
        U = warm.U.copy()
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        Theta = theta_step(S, Z, U)
        Z_prev_iter = Z
        Z = z_step(Theta, U, Theta_prev, cfg)
        U = U + Theta - Z
        if (np.sum((Theta - Z) ** 2) < cfg.epsilon
                and np.sum((Z - Z_prev_iter) ** 2) < cfg.epsilon):
            converged = True
            break
    return NetworkEstimate(Theta=Theta, Z=Z, U=U, iterations_used=it,
                           converged=converged,
                           objective=objective_value(S, Theta_prev, cfg, Z))


def edge_set(est, cfg):
    """Off-diagonal upper-triangular support of Z above zero_tol."""
    Z = est.Z if isinstance(est, NetworkEstimate) else np.asarray(est)
    p = Z.shape[0]
    rows, cols = np.triu_indices(p, k=1)
    mask = np.abs(Z[rows, cols]) > cfg.zero_tol
    return set(zip(rows[mask].tolist(), cols[mask].tolist()))
