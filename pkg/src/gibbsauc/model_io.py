"""Fitted-model persistence: one self-describing JSON document.

Floats are serialized through repr (shortest round-tripping decimal), so
save -> load -> predict is bit-identical on the same inputs. The schema
carries a version field; loaders reject unknown versions rather than
guessing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import StandardizationParams
from .errors import DataError
from .gp import GpPosterior, SqExpKernel, gp_predict

SCHEMA = "gibbsauc-model"
VERSION = 1

KIND_LINEAR_GAUSSIAN = "linear-gaussian"
KIND_LINEAR_SPIKESLAB = "linear-spikeslab"
KIND_GP = "gp"


@dataclass
class FittedModel:
    kind: str
    backend: str
    gamma: float
    prior: dict
    standardization: StandardizationParams
    log_evidence: float
    train_auc: float
    seed: int | None = None
    columns: tuple[str, ...] | None = None
    # linear kinds
    coef: np.ndarray | None = None
    cov: np.ndarray | None = None
    inclusion: np.ndarray | None = None
    # gp kind
    gp_X_train: np.ndarray | None = None
    gp_weights: np.ndarray | None = None
    gp_kernel: SqExpKernel | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.standardization.mean.size

    def score(self, X_raw: np.ndarray) -> np.ndarray:
        """Scores for raw (unstandardized) feature rows."""
        X = self.standardization.apply(np.atleast_2d(np.asarray(X_raw, dtype=float)))
        if self.kind == KIND_GP:
            post = GpPosterior(
                X_train=self.gp_X_train,
                kernel=self.gp_kernel,
                mean=np.zeros(self.gp_X_train.shape[0]),
                cov=np.zeros((0, 0)),
                weights=self.gp_weights,
                log_evidence=self.log_evidence,
                converged=True,
                n_sweeps=0,
            )
            return gp_predict(post, X)
        return X @ self.coef


def save_model(model: FittedModel, path) -> None:
    doc = {
        "format": SCHEMA,
        "version": VERSION,
        "kind": model.kind,
        "backend": model.backend,
        "gamma": float(model.gamma),
        "prior": {k: float(v) for k, v in model.prior.items()},
        "seed": None if model.seed is None else int(model.seed),
        "columns": list(model.columns) if model.columns else None,
        "log_evidence": float(model.log_evidence),
        "train_auc": float(model.train_auc),
        "standardization": {
            "mean": model.standardization.mean.tolist(),
            "scale": model.standardization.scale.tolist(),
            "constant": model.standardization.constant.astype(int).tolist(),
        },
        "coef": None if model.coef is None else model.coef.tolist(),
        "cov": None if model.cov is None else model.cov.tolist(),
        "inclusion": None if model.inclusion is None else model.inclusion.tolist(),
        "gp": None
        if model.gp_X_train is None
        else {
            "X_train": model.gp_X_train.tolist(),
            "weights": model.gp_weights.tolist(),
            "kernel": {
                "variance": model.gp_kernel.variance,
                "lengthscale": model.gp_kernel.lengthscale,
                "jitter": model.gp_kernel.effective_jitter,
            },
        },
        "extra": model.extra,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> FittedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if doc.get("format") != SCHEMA:
        raise DataError(f"{path} is not a {SCHEMA} file")
    if doc.get("version") != VERSION:
        raise DataError(f"unsupported model version {doc.get('version')}")
    std = doc["standardization"]
    params = StandardizationParams(
        np.asarray(std["mean"], dtype=float),
        np.asarray(std["scale"], dtype=float),
        np.asarray(std["constant"], dtype=bool),
    )
    gp_doc = doc.get("gp")
    return FittedModel(
        kind=doc["kind"],
        backend=doc["backend"],
        gamma=doc["gamma"],
        prior=doc["prior"],
        standardization=params,
        log_evidence=doc["log_evidence"],
        train_auc=doc["train_auc"],
        seed=doc.get("seed"),
        columns=tuple(doc["columns"]) if doc.get("columns") else None,
        coef=None if doc.get("coef") is None else np.asarray(doc["coef"], dtype=float),
        cov=None if doc.get("cov") is None else np.asarray(doc["cov"], dtype=float),
        inclusion=None
        if doc.get("inclusion") is None
        else np.asarray(doc["inclusion"], dtype=float),
        gp_X_train=None if gp_doc is None else np.asarray(gp_doc["X_train"], dtype=float),
        gp_weights=None if gp_doc is None else np.asarray(gp_doc["weights"], dtype=float),
        gp_kernel=None
        if gp_doc is None
        else SqExpKernel(
            variance=gp_doc["kernel"]["variance"],
            lengthscale=gp_doc["kernel"]["lengthscale"],
            jitter=gp_doc["kernel"]["jitter"],
        ),
        extra=doc.get("extra", {}),
    )
