"""Self-describing JSON model container with base64 array blocks.

A saved model holds everything needed to reproduce its predictions: the
training inputs, pseudo-observation targets and noise, kernel parameters,
normalization statistics, and the classifier configuration including the
Monte-Carlo seed. Factorizations are recomputed on load from the stored
float64 arrays, which reproduces the cached solver state exactly.

Serialization is deterministic (sorted keys, no timestamps), so refitting
with an identical configuration yields a byte-identical file.
"""

import base64
import json
from dataclasses import dataclass

import numpy as np

from .classifiers import GpdClassifierConfig, IlrClassifierConfig
from .data import NormStats, SplitSpec
from .gp import PseudoObservations, finalize_exact
from .kernel import RbfKernel
from .simplex import SmoothingConfig
from .sparse import CollapsedGpModel, finalize_collapsed

FORMAT = "ilrgp-model/1"


def array_to_spec(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "dtype": "float64",
        "b64": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii"),
    }


def spec_to_array(spec: dict) -> np.ndarray:
    raw = base64.b64decode(spec["b64"])
    return np.frombuffer(raw, dtype="<f8").reshape(spec["shape"]).astype(np.float64)


def config_to_payload(cfg) -> dict:
    if isinstance(cfg, IlrClassifierConfig):
        return {
            "model": "ilr",
            "lambda": cfg.smoothing.lam,
            "epsilon": cfg.smoothing.epsilon,
            "num_classes": cfg.num_classes,
            "noise_sigma": cfg.noise_sigma,
            "mc_samples": cfg.mc_samples,
            "prediction_mode": cfg.prediction_mode,
            "backend": cfg.backend,
            "num_inducing": cfg.num_inducing,
            "backend_seed": cfg.backend_seed,
        }
    if isinstance(cfg, GpdClassifierConfig):
        return {
            "model": "gpd",
            "alpha_eps": cfg.alpha_eps,
            "num_classes": cfg.num_classes,
            "mc_samples": cfg.mc_samples,
            "prediction_mode": cfg.prediction_mode,
            "backend": cfg.backend,
            "num_inducing": cfg.num_inducing,
            "backend_seed": cfg.backend_seed,
        }
    raise TypeError(f"unsupported config type {type(cfg).__name__}")


def config_from_payload(payload: dict):
    common = {
        "mc_samples": payload["mc_samples"],
        "prediction_mode": payload["prediction_mode"],
        "backend": payload["backend"],
        "num_inducing": payload["num_inducing"],
        "backend_seed": payload["backend_seed"],
    }
    if payload["model"] == "ilr":
        smoothing = SmoothingConfig(payload["lambda"], payload["num_classes"], payload["epsilon"])
        return IlrClassifierConfig(smoothing, payload["noise_sigma"], **common)
    if payload["model"] == "gpd":
        return GpdClassifierConfig(payload["alpha_eps"], payload["num_classes"], **common)
    raise ValueError(f"unknown model kind {payload['model']!r}")


@dataclass(frozen=True)
class ModelArtifact:
    """Loaded model file: backend model plus everything around it."""

    classifier_config: object
    model: object
    norm_stats: NormStats | None
    seed: int
    split: SplitSpec | None
    label_column: str
    data_fingerprint: dict
    effective_config: dict

    @property
    def kind(self) -> str:
        return "ilr" if isinstance(self.classifier_config, IlrClassifierConfig) else "gpd"


def _noise_payload(pseudo: PseudoObservations) -> dict:
    if pseudo.noise_kind == "scalar":
        return {"kind": "scalar", "value": pseudo.noise}
    return {"kind": pseudo.noise_kind, "data": array_to_spec(np.asarray(pseudo.noise))}


def _noise_from_payload(payload: dict):
    if payload["kind"] == "scalar":
        return payload["value"]
    return spec_to_array(payload["data"])


def save_model(path, artifact: ModelArtifact):
    model = artifact.model
    payload = {
        "format": FORMAT,
        "classifier": config_to_payload(artifact.classifier_config),
        "kernel": {
            "log_signal_variance": model.kernel.log_signal_variance,
            "log_lengthscale": model.kernel.log_lengthscale,
            "input_dim": model.kernel.input_dim,
        },
        "arrays": {
            "X_train": array_to_spec(model.X_train),
            "Z": array_to_spec(model.pseudo.Z),
        },
        "noise": _noise_payload(model.pseudo),
        "normalization": artifact.norm_stats.to_dict() if artifact.norm_stats else None,
        "seed": artifact.seed,
        "split": (
            {
                "train": artifact.split.train,
                "val": artifact.split.val,
                "test": artifact.split.test,
                "seed": artifact.split.seed,
            }
            if artifact.split
            else None
        ),
        "label_column": artifact.label_column,
        "data_fingerprint": artifact.data_fingerprint,
        "effective_config": artifact.effective_config,
        "fit_info": model.fit_info,
    }
    if isinstance(model, CollapsedGpModel):
        payload["arrays"]["Xu"] = array_to_spec(model.Xu)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_model(path) -> ModelArtifact:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported model format {payload.get('format')!r}")
    cfg = config_from_payload(payload["classifier"])
    kern = RbfKernel(
        payload["kernel"]["log_signal_variance"],
        payload["kernel"]["log_lengthscale"],
        payload["kernel"]["input_dim"],
    )
    X = spec_to_array(payload["arrays"]["X_train"])
    pseudo = PseudoObservations(spec_to_array(payload["arrays"]["Z"]), _noise_from_payload(payload["noise"]))
    if "Xu" in payload["arrays"]:
        model = finalize_collapsed(X, spec_to_array(payload["arrays"]["Xu"]), pseudo, kern,
                                   fit_info=payload.get("fit_info"))
    else:
        model = finalize_exact(X, pseudo, kern, fit_info=payload.get("fit_info"))
    norm = NormStats.from_dict(payload["normalization"]) if payload["normalization"] else None
    split = SplitSpec(**payload["split"]) if payload["split"] else None
    return ModelArtifact(
        classifier_config=cfg,
        model=model,
        norm_stats=norm,
        seed=payload["seed"],
        split=split,
        label_column=payload.get("label_column", "label"),
        data_fingerprint=payload.get("data_fingerprint", {}),
        effective_config=payload.get("effective_config", {}),
    )
