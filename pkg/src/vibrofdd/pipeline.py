"""Feature extraction -> PCA -> classifier, as one fitted object."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import pca as pca_mod
from .dsp import WaveletConfig, WaveletFamily, extract_features
from .errors import ClassTooSmall, DimMismatch
from .hpo import DEFAULT_FOLDS, SvmParams, cv_error, stratified_folds, tune_svm
from .ingest import DEFAULT_WINDOW_LEN, VibrationWindow
from .mlp import MlpModel, lbfgs_train
from .parallel import pmap
from .svm import MulticlassSvm, Standardizer

CLASSES = (0, 1, 2)


@dataclass(frozen=True)
class PipelineConfig:
    window_len: int = DEFAULT_WINDOW_LEN
    wavelet: WaveletConfig = WaveletConfig()
    denoise_raw: bool = False
    n_components: int = pca_mod.DEFAULT_COMPONENTS
    standardize_features: bool = False


def feature_matrix(windows: Sequence[VibrationWindow], cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    if not windows:
        return np.zeros((0, cfg.window_len // 2 + 1))
    rows = pmap(lambda w: extract_features(w, cfg.wavelet, cfg.denoise_raw).values, windows)
    return np.vstack(rows)


@dataclass
class FittedPipeline:
    config: PipelineConfig
    pca: pca_mod.PcaModel
    classifier: MulticlassSvm | MlpModel
    feature_standardizer: Standardizer | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "svm" if isinstance(self.classifier, MulticlassSvm) else "mlp"

    def reduce(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(features)
        if features.shape[1] != self.pca.n_features:
            raise DimMismatch(
                f"feature dimension {features.shape[1]} does not match the bundle's {self.pca.n_features}"
            )
        if self.feature_standardizer is not None:
            features = self.feature_standardizer.apply(features)
        return self.pca.transform(features)

    def scores_reduced(self, z: np.ndarray) -> np.ndarray:
        """Per-class scores, higher is better: negated hinge loss or probability."""
        if isinstance(self.classifier, MulticlassSvm):
            return -self.classifier.losses(z)
        return self.classifier.predict_proba(z)

    def predict_reduced(self, z: np.ndarray) -> np.ndarray:
        return self.classifier.predict(z)

    def predict_features(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = self.reduce(features)
        return self.predict_reduced(z), self.scores_reduced(z)

    def predict_windows(self, windows: Sequence[VibrationWindow]) -> tuple[np.ndarray, np.ndarray]:
        return self.predict_features(feature_matrix(windows, self.config))


def stratified_split(labels, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks (train, test) with ``test_fraction`` of every class held out."""
    labels = np.asarray(labels)
    test = np.zeros(len(labels), dtype=bool)
    if test_fraction <= 0:
        return ~test, test
    rng = np.random.Generator(np.random.PCG64(seed))
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        k = int(round(test_fraction * len(idx)))
        k = min(k, len(idx) - 1)
        if k > 0:
            test[idx[rng.permutation(len(idx))[:k]]] = True
    return ~test, test


def _cv_accuracy_mlp(z, y, folds_seed, max_iter, seed, k_folds=DEFAULT_FOLDS) -> float:
    folds = stratified_folds(y, k_folds, folds_seed)
    errs = []
    for f in range(k_folds):
        test = folds == f
        m = lbfgs_train(z[~test], y[~test], max_iter, seed, standardize=True)
        errs.append(float(np.mean(m.predict(z[test]) != y[test])))
    return 1.0 - float(np.mean(errs))


def fit_pipeline(features: np.ndarray, labels, cfg: PipelineConfig = PipelineConfig(), model: str = "svm",
                 tune: int = 0, seed: int = 0, svm_params: SvmParams = SvmParams(),
                 mlp_max_iter: int = 200, k_folds: int = DEFAULT_FOLDS):
    """Fit PCA and a classifier on already-extracted features.

    Returns ``(pipeline, trace)``; ``trace`` is ``None`` unless tuned.
    Validation accuracy (k-fold CV on these rows) lands in
    ``pipeline.metadata["accuracy_validation"]``.
    """
    features = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    fstd = Standardizer.fit(features) if cfg.standardize_features else None
    fz = fstd.apply(features) if fstd is not None else features
    pca = pca_mod.fit_clamped(fz, min(cfg.n_components, len(fz), fz.shape[1]))
    z = pca.transform(fz)

    streams = np.random.SeedSequence(seed).generate_state(4)
    cv_seed, mlp_seed = int(streams[0]), int(streams[1])
    trace = None
    meta: dict[str, Any] = {"n_components": pca.n_components}
    if model == "svm":
        if tune:
            clf, params, trace = tune_svm(z, y, tune, seed, k_folds, classes=CLASSES)
            meta["cv_error"] = min(trace.running_best)
            meta["iterations"] = tune
        else:
            params = svm_params
            clf = params.train(z, y, CLASSES)
            meta["iterations"] = 1
            try:
                meta["cv_error"] = cv_error(z, y, params, k_folds, cv_seed, CLASSES)
            except ClassTooSmall as exc:
                warnings.warn(f"cross-validation skipped: {exc}", stacklevel=2)
                meta["cv_error"] = None
        meta["params"] = params.as_dict()
    elif model in ("nn", "mlp"):
        clf = lbfgs_train(z, y, mlp_max_iter, mlp_seed, standardize=True)
        meta["iterations"] = clf.iterations
        meta["params"] = {"hidden": [25, 25], "max_iter": mlp_max_iter, "seed": mlp_seed}
        try:
            meta["cv_error"] = 1.0 - _cv_accuracy_mlp(z, y, cv_seed, mlp_max_iter, mlp_seed, k_folds)
        except ClassTooSmall as exc:
            warnings.warn(f"cross-validation skipped: {exc}", stacklevel=2)
            meta["cv_error"] = None
    else:
        raise ValueError(f"unknown model kind {model!r}")
    cv = meta["cv_error"]
    meta["accuracy_validation"] = None if cv is None else 1.0 - cv
    return FittedPipeline(cfg, pca, clf, fstd, meta), trace


def retrain_classifier(pipe: FittedPipeline, z: np.ndarray, y: np.ndarray):
    """Refit the pipeline's classifier kind with its stored hyperparameters."""
    if pipe.kind == "svm":
        return SvmParams.from_dict(pipe.metadata["params"]).train(z, y, CLASSES)
    p = pipe.metadata.get("params", {})
    return lbfgs_train(z, y, int(p.get("max_iter", 200)), int(p.get("seed", 0)), standardize=True)


def wavelet_from_args(name: str, levels: int) -> WaveletConfig:
    return WaveletConfig(WaveletFamily(name), levels)
