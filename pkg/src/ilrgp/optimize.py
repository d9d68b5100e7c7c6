"""Adam-style ascent with a monotonicity safeguard.

Used for the two log-scale kernel hyperparameters. Proposed steps that would
decrease the objective are halved until they improve it, so the value over
accepted iterates is non-decreasing; if no scaled-down step improves, the
run stops at the current point.
"""

from dataclasses import dataclass

import numpy as np


class FitError(RuntimeError):
    """Raised when the objective turns non-finite; carries the last good params."""

    def __init__(self, message, last_params=None, last_value=None):
        super().__init__(message)
        self.last_params = last_params
        self.last_value = last_value


@dataclass(frozen=True)
class OptConfig:
    learning_rate: float = 1e-2
    max_iters: int = 500
    grad_tol: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_halvings: int = 25

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass(frozen=True)
class OptResult:
    params: np.ndarray
    value: float
    iterations: int
    converged: bool


def adam_maximize(value_and_grad, x0, config: OptConfig | None = None, value_only=None) -> OptResult:
    """Maximize a smooth objective from ``x0``.

    Parameters
    ----------
    value_and_grad : callable
        Maps a parameter vector to ``(value, gradient)``.
    x0 : array_like
        Starting point.
    config : OptConfig, optional
    value_only : callable, optional
        Cheaper objective-only evaluation used for trial points during the
        halving search; defaults to ``value_and_grad``.

    Returns
    -------
    OptResult
    """
    cfg = config or OptConfig()
    if value_only is None:
        value_only = lambda x: value_and_grad(x)[0]

    x = np.asarray(x0, dtype=float).copy()
    f, g = value_and_grad(x)
    if not np.isfinite(f):
        raise FitError("objective non-finite at the initial point", last_params=None)

    m = np.zeros_like(x)
    v = np.zeros_like(x)
    iterations = 0
    for t in range(1, cfg.max_iters + 1):
        if np.max(np.abs(g)) < cfg.grad_tol:
            return OptResult(x, float(f), iterations, True)

        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        mhat = m / (1.0 - cfg.beta1**t)
        vhat = v / (1.0 - cfg.beta2**t)
        step = cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)

        scale = 1.0
        accepted = False
        f_try = np.nan
        for _ in range(cfg.max_halvings + 1):
            x_try = x + scale * step
            f_try = value_only(x_try)
            if np.isfinite(f_try) and f_try >= f:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            if not np.isfinite(f_try):
                raise FitError(
                    "objective became non-finite during optimization",
                    last_params=x.copy(),
                    last_value=float(f),
                )
            # No scaled-down step improves: the current point is as good as
            # this direction gets.
            return OptResult(x, float(f), iterations, True)

        x = x_try
        f, g = value_and_grad(x)
        iterations = t
        if not np.isfinite(f):
            raise FitError(
                "objective became non-finite during optimization",
                last_params=x.copy(),
                last_value=None,
            )

    converged = bool(np.max(np.abs(g)) < cfg.grad_tol)
    return OptResult(x, float(f), iterations, converged)
