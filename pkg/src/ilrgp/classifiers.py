"""End-to-end classifiers over the latent GP backends.

Two constructions are provided. The log-ratio classifier embeds each label
as the latent image of a smoothed one-hot vector and regresses with a fixed
shared noise variance, using K - 1 latent coordinates. The Dirichlet-based
baseline regresses moment-matched log-concentration targets with
label-dependent heteroscedastic noise, using K latent coordinates.

Monte-Carlo prediction draws from the per-coordinate Gaussian predictive
(optionally with the likelihood noise added, the "noisy-z" mode), pushes
each draw through the inverse link, and averages. A per-point RNG substream
keeps predictions independent of evaluation order.
"""

from dataclasses import dataclass, replace

import numpy as np

from .data import gen_circle_mixture
from .gp import (
    ExactGpModel,
    PseudoObservations,
    fit_exact,
    predict_latent_batch,
    predict_observation_batch,
)
from .metrics import error_rate
from .optimize import OptConfig
from .simplex import SmoothingConfig, class_target_matrix, helmert_basis, sigma_bound
from .sparse import (
    CollapsedGpModel,
    fit_collapsed,
    predict_latent_sparse_batch,
    predict_observation_sparse_batch,
)

PREDICTION_MODES = ("latent-f", "noisy-z")
BACKENDS = ("exact", "collapsed")


def derive_seed(*parts) -> int:
    """Fold integer parts into one reproducible 32-bit seed."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass(frozen=True)
class IlrClassifierConfig:
    """Configuration of the log-ratio classifier.

    ``noise_sigma`` defaults to the overlap bound for the smoothing setup;
    explicit values must stay at or below that bound.
    """

    smoothing: SmoothingConfig
    noise_sigma: float | None = None
    mc_samples: int = 1000
    prediction_mode: str = "latent-f"
    backend: str = "exact"
    num_inducing: int | None = None
    backend_seed: int = 0

    def __post_init__(self):
        _check_common(self)
        if self.noise_sigma is not None:
            bound = sigma_bound(self.smoothing)
            if not (0.0 < self.noise_sigma <= bound + 1e-12):
                raise ValueError(
                    f"noise_sigma must lie in (0, {bound!r}] for this smoothing setup"
                )

    @property
    def num_classes(self) -> int:
        return self.smoothing.num_classes

    def resolved_sigma(self) -> float:
        return sigma_bound(self.smoothing) if self.noise_sigma is None else self.noise_sigma


@dataclass(frozen=True)
class GpdClassifierConfig:
    """Configuration of the Dirichlet-based baseline classifier."""

    alpha_eps: float
    num_classes: int
    mc_samples: int = 1000
    prediction_mode: str = "latent-f"
    backend: str = "exact"
    num_inducing: int | None = None
    backend_seed: int = 0

    def __post_init__(self):
        _check_common(self)
        if self.alpha_eps <= 0:
            raise ValueError(f"alpha_eps must be positive, got {self.alpha_eps}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")


def _check_common(cfg):
    if cfg.mc_samples < 1:
        raise ValueError(f"mc_samples must be >= 1, got {cfg.mc_samples}")
    if cfg.prediction_mode not in PREDICTION_MODES:
        raise ValueError(f"prediction_mode must be one of {PREDICTION_MODES}")
    if cfg.backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    if cfg.backend == "collapsed" and (cfg.num_inducing is None or cfg.num_inducing < 1):
        raise ValueError("collapsed backend needs num_inducing >= 1")


@dataclass(frozen=True)
class PredictionSet:
    """Predictive class probabilities and hard labels for a batch of inputs."""

    probs: np.ndarray
    labels_hat: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ValueError(f"probs must be (T, K), got shape {probs.shape}")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("probability rows must be non-negative and sum to 1")
        labels_hat = np.asarray(self.labels_hat, dtype=int)
        if not np.array_equal(labels_hat, probs.argmax(axis=1) + 1):
            raise ValueError("labels_hat must be the per-row argmax (1-based)")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels_hat", labels_hat)


def _check_labels(labels, num_classes) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
    if np.any(labels < 1) or np.any(labels > num_classes):
        raise ValueError(f"labels must lie in 1..{num_classes}")
    return labels


def build_ilr_pseudo(labels, cfg: IlrClassifierConfig) -> PseudoObservations:
    """Latent targets for the log-ratio classifier: one row per datum.

    Row n is the latent image of the smoothed one-hot vector of its class;
    the noise is the shared scalar variance from the config.
    """
    labels = _check_labels(labels, cfg.num_classes)
    targets = class_target_matrix(cfg.smoothing)
    return PseudoObservations(targets[labels - 1], cfg.resolved_sigma() ** 2)


def gpd_target_rows(num_classes: int, alpha_eps: float):
    """Per-class target and noise-variance rows of the Dirichlet construction.

    For a point of class k the concentration is ``1 + alpha_eps`` on
    coordinate k and ``alpha_eps`` elsewhere; matching the first two moments
    of each Gamma(alpha, 1) factor with a log-normal gives per-coordinate
    targets ``log(alpha) - s2/2`` and variances ``s2 = log(1 + 1/alpha)``.

    Returns ``(Y, S2)`` of shape (K, K): row k - 1 holds the values for a
    point whose class is k.
    """
    alpha_hot = 1.0 + alpha_eps
    s2_hot = np.log1p(1.0 / alpha_hot)
    s2_cold = np.log1p(1.0 / alpha_eps)
    y_hot = np.log(alpha_hot) - 0.5 * s2_hot
    y_cold = np.log(alpha_eps) - 0.5 * s2_cold
    Y = np.full((num_classes, num_classes), y_cold)
    S2 = np.full((num_classes, num_classes), s2_cold)
    np.fill_diagonal(Y, y_hot)
    np.fill_diagonal(S2, s2_hot)
    return Y, S2


def build_gpd_pseudo(labels, cfg: GpdClassifierConfig) -> PseudoObservations:
    """Heteroscedastic pseudo-observations for the Dirichlet-based baseline."""
    labels = _check_labels(labels, cfg.num_classes)
    Y, S2 = gpd_target_rows(cfg.num_classes, cfg.alpha_eps)
    return PseudoObservations(Y[labels - 1], S2[labels - 1])


def build_pseudo(labels, cfg) -> PseudoObservations:
    if isinstance(cfg, IlrClassifierConfig):
        return build_ilr_pseudo(labels, cfg)
    if isinstance(cfg, GpdClassifierConfig):
        return build_gpd_pseudo(labels, cfg)
    raise TypeError(f"unsupported config type {type(cfg).__name__}")


def fit_classifier(X, labels, cfg, opt_config: OptConfig | None = None):
    """Fit the configured backend on pseudo-observations built from labels."""
    pseudo = build_pseudo(labels, cfg)
    if cfg.backend == "exact":
        return fit_exact(X, pseudo, opt_config)
    return fit_collapsed(X, pseudo, cfg.num_inducing, cfg.backend_seed, opt_config)


def _softmax_rows(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    W = np.exp(Z)
    return W / W.sum(axis=1, keepdims=True)


def _predictive_batch(model, X_star, mode):
    if isinstance(model, CollapsedGpModel):
        if mode == "noisy-z":
            return predict_observation_sparse_batch(model, X_star)
        return predict_latent_sparse_batch(model, X_star)
    if mode == "noisy-z":
        return predict_observation_batch(model, X_star)
    return predict_latent_batch(model, X_star)


def predict_proba(model, X_star, cfg, seed: int = 0) -> PredictionSet:
    """Monte-Carlo predictive class probabilities for a batch of inputs.

    Draws ``cfg.mc_samples`` latent samples per input from the Gaussian
    predictive selected by ``cfg.prediction_mode``, maps them through the
    inverse link of the configured classifier, and averages. Point ``i``
    uses the RNG substream ``(seed, i)``, so results do not depend on
    evaluation order and repeat exactly for equal seeds.
    """
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[None, :]
    means, var = _predictive_batch(model, X_star, cfg.prediction_mode)
    T, D = means.shape
    if isinstance(cfg, IlrClassifierConfig):
        if cfg.num_classes != D + 1:
            raise ValueError(f"model has {D} latent coordinates, config expects {cfg.num_classes - 1}")
        H = helmert_basis(cfg.num_classes)
        link = lambda F: _softmax_rows(F @ H)
        K = cfg.num_classes
    else:
        if cfg.num_classes != D:
            raise ValueError(f"model has {D} latent coordinates, config expects {cfg.num_classes}")
        link = _softmax_rows
        K = cfg.num_classes

    sd = np.sqrt(var)
    S = cfg.mc_samples
    probs = np.empty((T, K))
    for i in range(T):
        rng = np.random.default_rng([seed, i])
        draws = means[i] + sd[i] * rng.standard_normal((S, D))
        probs[i] = link(draws).mean(axis=0)
    return PredictionSet(probs, probs.argmax(axis=1) + 1)


def gpd_label_recovery_error(num_classes: int, alpha_eps: float,
                             num_samples: int = 100_000, seed: int = 0) -> float:
    """How often the Dirichlet construction alone loses the true class.

    No GP is involved: latent values are drawn from the log-normal
    moment-matched approximation under the true-class parameterization and
    pushed through the softmax; the result is the fraction of draws whose
    argmax is not the true class. Errors come from the heavy upper tail of
    the high-variance off-class coordinates.
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    Y, S2 = gpd_target_rows(num_classes, alpha_eps)
    y = Y[0]
    s = np.sqrt(S2[0])
    rng = np.random.default_rng(seed)
    z = rng.lognormal(mean=np.broadcast_to(y, (num_samples, num_classes)),
                      sigma=np.broadcast_to(s, (num_samples, num_classes)))
    labels_hat = _softmax_rows(z).argmax(axis=1) + 1
    return float(np.mean(labels_hat != 1))


def breakdown_experiment(num_classes: int = 3, mix_sd: float = 0.1, lam: float = 0.9,
                         alpha_eps: float = 0.01, seed: int = 0,
                         n_train: int = 1000, n_test: int = 1000, num_repeats: int = 5,
                         opt_config: OptConfig | None = None) -> dict:
    """Error rates of both classifiers under both prediction modes.

    Trains the exact log-ratio and Dirichlet-based classifiers on a
    well-separated mixture and predicts with a single Monte-Carlo sample,
    once from the latent predictive and once from the noisy-observation
    predictive. Repeats over ``num_repeats`` data draws and reports per-run
    errors with mean and standard deviation.
    """
    ilr_cfg = IlrClassifierConfig(SmoothingConfig(lam, num_classes), mc_samples=1)
    gpd_cfg = GpdClassifierConfig(alpha_eps, num_classes, mc_samples=1)
    runs = {name: {mode: [] for mode in PREDICTION_MODES} for name in ("ilr", "gpd")}
    for r in range(num_repeats):
        train = gen_circle_mixture(num_classes, n_train, mix_sd, derive_seed(seed, r, 0))
        test = gen_circle_mixture(num_classes, n_test, mix_sd, derive_seed(seed, r, 1))
        fitted = {
            "ilr": (fit_classifier(train.X, train.labels, ilr_cfg, opt_config), ilr_cfg),
            "gpd": (fit_classifier(train.X, train.labels, gpd_cfg, opt_config), gpd_cfg),
        }
        for mi, name in enumerate(("ilr", "gpd")):
            model, cfg = fitted[name]
            for mo, mode in enumerate(PREDICTION_MODES):
                pred = predict_proba(
                    model, test.X, replace(cfg, prediction_mode=mode),
                    seed=derive_seed(seed, r, 2 + mi, mo),
                )
                runs[name][mode].append(error_rate(pred.labels_hat, test.labels))
    out = {}
    for name in runs:
        out[name] = {}
        for mode in PREDICTION_MODES:
            vals = np.asarray(runs[name][mode])
            out[name][mode] = {
                "errors": [float(v) for v in vals],
                "mean": float(vals.mean()),
                "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
            }
    return out
