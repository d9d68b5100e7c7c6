"""Collapsed inducing-point approximation for the latent regression model.

The variational distribution over inducing values is optimized out
analytically, leaving a lower bound on the marginal log-likelihood: the
Gaussian log-density under the Nystrom approximation ``Q = Knm Km^-1 Kmn``
plus a trace penalty for the discarded residual. Everything is evaluated
through an M x M factorization in O(N M^2); the N x N matrix ``Q`` is never
formed.

Inducing inputs are chosen by k-means++ seeding and then held fixed; only
the kernel hyperparameters are optimized. Per-point (and per-coordinate)
noise is supported by folding the noise diagonal into the projected
statistics, one factorization per distinct noise column.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .gp import LatentPredictive, PseudoObservations, _clamp_variance, initial_kernel
from .kernel import RbfKernel, cholesky_with_jitter, cross_gram, gram
from .optimize import OptConfig, adam_maximize

_LOG_2PI = math.log(2.0 * math.pi)

_FD_STEP = 1e-4


def kmeanspp_select(X, M: int, seed) -> np.ndarray:
    """Choose M rows of X by the k-means++ seeding rule (no Lloyd steps).

    The first center is uniform; each subsequent center is drawn with
    probability proportional to its squared distance to the nearest center
    already chosen. Deterministic given ``seed``.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= M <= n:
        raise ValueError(f"need 1 <= M <= {n}, got M={M}")
    rng = np.random.default_rng(seed)
    chosen = np.empty(M, dtype=int)
    chosen[0] = rng.integers(n)
    min_d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for m in range(1, M):
        total = min_d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=min_d2 / total))
        else:
            # All remaining points coincide with a center; fall back to a
            # uniform draw over the untaken ones.
            idx = int(rng.choice(np.flatnonzero(~taken)))
        chosen[m] = idx
        taken[idx] = True
        min_d2 = np.minimum(min_d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _coordinate_pieces(kernel, X, Xu, pseudo):
    """Per-coordinate (LB, c, quad, logdet, trace) terms plus the shared L.

    For coordinate d with noise diagonal s^2:
      A  = L^-1 Kmn diag(1/s)          (M x N)
      B  = I + A A'                    (M x M), LB its Cholesky
      c  = LB^-1 A (z/s)
      quad   = (z/s)'(z/s) - c'c       = z' (Q + diag(s^2))^-1 z
      logdet = 2 sum log diag LB + sum log s^2
      trace  = sum_i (k_ii - q_ii) / s_i^2
    """
    X = np.asarray(X, dtype=float)
    Xu = np.asarray(Xu, dtype=float)
    Km = gram(kernel, Xu)
    Kmn = cross_gram(kernel, Xu, X)
    L = cholesky_with_jitter(Km, kernel.signal_variance)
    V = solve_triangular(L, Kmn, lower=True, check_finite=False)
    q_diag = (V * V).sum(axis=0)
    kss = kernel.signal_variance

    pieces = []
    cache = {}
    for d in range(pseudo.latent_dim):
        s2 = pseudo.noise_diagonal(d)
        key = 0 if pseudo.shared_noise else d
        if key not in cache:
            s = np.sqrt(s2)
            A = V / s[None, :]
            B = np.eye(Xu.shape[0]) + A @ A.T
            LB = np.linalg.cholesky(B)
            logdet = 2.0 * float(np.log(np.diag(LB)).sum()) + float(np.log(s2).sum())
            # tr(K - Q) is non-negative by construction; guard round-off.
            trace = float(np.maximum(kss - q_diag, 0.0) @ (1.0 / s2))
            cache[key] = (s, A, LB, logdet, trace)
        s, A, LB, logdet, trace = cache[key]
        zs = pseudo.Z[:, d] / s
        c = solve_triangular(LB, A @ zs, lower=True, check_finite=False)
        quad = float(zs @ zs) - float(c @ c)
        pieces.append((LB, c, quad, logdet, trace))
    return L, pieces


def collapsed_bound(kernel: RbfKernel, X, Xu, pseudo: PseudoObservations) -> float:
    """Collapsed variational lower bound on the marginal log-likelihood.

    Attains the exact marginal log-likelihood when the inducing inputs
    coincide with the training inputs, and is dominated by it otherwise.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] != pseudo.n:
        raise ValueError(f"X has {X.shape[0]} rows but Z has {pseudo.n}")
    _, pieces = _coordinate_pieces(kernel, X, Xu, pseudo)
    n = pseudo.n
    bound = 0.0
    for _, _, quad, logdet, trace in pieces:
        bound += -0.5 * quad - 0.5 * logdet - 0.5 * n * _LOG_2PI - 0.5 * trace
    return bound


@dataclass(frozen=True)
class CollapsedGpModel:
    """Fitted collapsed model: inducing set plus projected statistics."""

    X_train: np.ndarray
    Xu: np.ndarray
    kernel: RbfKernel
    pseudo: PseudoObservations
    chol_km: np.ndarray
    chol_bs: tuple
    gammas: np.ndarray  # (M, D), column d = LB_d^-1 A_d (z_d / s_d)
    fit_info: dict | None = field(default=None, compare=False)

    @property
    def latent_dim(self) -> int:
        return self.pseudo.latent_dim

    @property
    def num_inducing(self) -> int:
        return self.Xu.shape[0]

    @property
    def shared_noise(self) -> bool:
        return self.pseudo.shared_noise


def finalize_collapsed(X, Xu, pseudo: PseudoObservations, kernel: RbfKernel, fit_info=None) -> CollapsedGpModel:
    """Cache the factorizations needed for sparse prediction."""
    L, pieces = _coordinate_pieces(kernel, X, Xu, pseudo)
    gammas = np.column_stack([c for _, c, _, _, _ in pieces])
    if pseudo.shared_noise:
        chol_bs = (pieces[0][0],)
    else:
        chol_bs = tuple(p[0] for p in pieces)
    return CollapsedGpModel(
        np.asarray(X, dtype=float), np.asarray(Xu, dtype=float), kernel, pseudo,
        L, chol_bs, gammas, fit_info,
    )


def fit_collapsed(X, pseudo: PseudoObservations, M: int, seed,
                  opt_config: OptConfig | None = None) -> CollapsedGpModel:
    """Fit kernel hyperparameters on the collapsed bound.

    Inducing inputs come from k-means++ seeding and stay fixed; the two log
    hyperparameters are optimized with the same ascent loop as the exact
    model, using central finite differences for the gradient.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] != pseudo.n:
        raise ValueError(f"X has {X.shape[0]} rows but Z has {pseudo.n}")
    Xu = kmeanspp_select(X, M, seed)
    k0 = initial_kernel(X, pseudo)

    def value(params):
        return collapsed_bound(k0.with_params(params[0], params[1]), X, Xu, pseudo)

    def value_and_grad(params):
        f = value(params)
        g = np.empty(2)
        for i in range(2):
            shifted = params.copy()
            shifted[i] = params[i] + _FD_STEP
            hi = value(shifted)
            shifted[i] = params[i] - _FD_STEP
            lo = value(shifted)
            g[i] = (hi - lo) / (2.0 * _FD_STEP)
        return f, g

    x0 = np.array([k0.log_signal_variance, k0.log_lengthscale])
    result = adam_maximize(value_and_grad, x0, opt_config, value_only=value)
    fitted = k0.with_params(result.params[0], result.params[1])
    info = {
        "objective": result.value,
        "iterations": result.iterations,
        "converged": result.converged,
        "num_inducing": int(M),
    }
    return finalize_collapsed(X, Xu, pseudo, fitted, fit_info=info)


def predict_latent_sparse_batch(model: CollapsedGpModel, X_star):
    """Sparse latent predictive means and variances for a batch of inputs."""
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[None, :]
    Ksu = cross_gram(model.kernel, model.Xu, X_star)  # (M, T)
    T1 = solve_triangular(model.chol_km, Ksu, lower=True, check_finite=False)
    kss = model.kernel.signal_variance
    if model.shared_noise:
        T2 = solve_triangular(model.chol_bs[0], T1, lower=True, check_finite=False)
        means = T2.T @ model.gammas
        var = kss - (T1 * T1).sum(axis=0) + (T2 * T2).sum(axis=0)
    else:
        means = np.empty((X_star.shape[0], model.latent_dim))
        var = np.empty((X_star.shape[0], model.latent_dim))
        for d in range(model.latent_dim):
            T2 = solve_triangular(model.chol_bs[d], T1, lower=True, check_finite=False)
            means[:, d] = T2.T @ model.gammas[:, d]
            var[:, d] = kss - (T1 * T1).sum(axis=0) + (T2 * T2).sum(axis=0)
    return means, _clamp_variance(var)


def predict_latent_sparse(model: CollapsedGpModel, x_star) -> LatentPredictive:
    """Sparse latent predictive at one input."""
    means, var = predict_latent_sparse_batch(model, np.asarray(x_star, dtype=float)[None, :])
    return LatentPredictive(means[0], float(var[0]) if model.shared_noise else var[0])


def predict_observation_sparse_batch(model: CollapsedGpModel, X_star):
    """Sparse predictive with likelihood noise added to the variance."""
    means, var = predict_latent_sparse_batch(model, X_star)
    obs = model.pseudo.observation_variance()
    if model.shared_noise:
        return means, var + obs
    return means, var + np.asarray(obs)[None, :]
