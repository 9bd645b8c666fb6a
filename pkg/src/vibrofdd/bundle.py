"""Versioned JSON model bundle.

Floats are written with ``repr`` precision by the json module, so a
write -> read -> write cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .dsp import Shrinkage, ThresholdRule, WaveletConfig, WaveletFamily
from .errors import DatasetError, VersionMismatch
from .mlp import MlpModel
from .pca import PcaModel
from .pipeline import FittedPipeline, PipelineConfig
from .svm import BinarySvm, KernelSpec, MulticlassSvm, Standardizer

FORMAT_VERSION = 1


def write_text_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_fingerprint(paths) -> str:
    """64-bit hash of sorted (name, size) pairs."""
    h = hashlib.blake2b(digest_size=8)
    for p in sorted(Path(p) for p in paths):
        h.update(f"{p.name}\0{p.stat().st_size}\n".encode())
    return h.hexdigest()


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _std_to(s: Standardizer | None):
    return None if s is None else {"mean": _arr(s.mean), "std": _arr(s.std)}


def _std_from(d) -> Standardizer | None:
    return None if d is None else Standardizer(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


def _svm_to(m: MulticlassSvm) -> dict:
    return {
        "kind": "svm",
        "scheme": m.scheme,
        "classes": list(m.classes),
        "coding": _arr(m.coding),
        "standardizer": _std_to(m.standardizer),
        "learners": [
            {
                "kernel": {"kind": l.kernel.kind, "scale": float(l.kernel.scale)},
                "box_constraint": float(l.box_constraint),
                "bias": float(l.bias),
                "support_vectors": _arr(l.support_vectors),
                "dual_coefs": _arr(l.dual_coefs),
                "converged": bool(l.converged),
                "iterations": int(l.iterations),
            }
            for l in m.learners
        ],
    }


def _svm_from(d: dict, n_features: int) -> MulticlassSvm:
    learners = []
    for l in d["learners"]:
        sv = np.array(l["support_vectors"], dtype=float).reshape(-1, n_features)
        coefs = np.array(l["dual_coefs"], dtype=float)
        learners.append(BinarySvm(
            support_vectors=sv,
            dual_coefs=coefs,
            bias=float(l["bias"]),
            kernel=KernelSpec(float(l["kernel"]["scale"]), l["kernel"]["kind"]),
            box_constraint=float(l["box_constraint"]),
            converged=bool(l["converged"]),
            iterations=int(l["iterations"]),
        ))
    return MulticlassSvm(learners, np.array(d["coding"], dtype=float), tuple(d["classes"]),
                         _std_from(d["standardizer"]), d["scheme"])


def _mlp_to(m: MlpModel) -> dict:
    return {
        "kind": "mlp",
        "sizes": list(m.sizes),
        "weights": [_arr(w) for w in m.weights],
        "biases": [_arr(b) for b in m.biases],
        "standardizer": _std_to(m.standardizer),
        "iterations": int(m.iterations),
        "converged": bool(m.converged),
    }


def _mlp_from(d: dict) -> MlpModel:
    sizes = tuple(int(s) for s in d["sizes"])
    weights = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], sizes[:-1], sizes[1:])]
    return MlpModel(sizes, weights, [np.array(b, dtype=float) for b in d["biases"]],
                    _std_from(d["standardizer"]), int(d["iterations"]), bool(d["converged"]))


def to_dict(pipe: FittedPipeline) -> dict[str, Any]:
    cfg = pipe.config
    clf = _svm_to(pipe.classifier) if pipe.kind == "svm" else _mlp_to(pipe.classifier)
    return {
        "format_version": FORMAT_VERSION,
        "pipeline": {
            "window_len": cfg.window_len,
            "wavelet": {
                "family": cfg.wavelet.family.value,
                "levels": cfg.wavelet.levels,
                "threshold_rule": cfg.wavelet.threshold_rule.value,
                "shrinkage": cfg.wavelet.shrinkage.value,
            },
            "denoise_raw": cfg.denoise_raw,
            "n_components": cfg.n_components,
            "standardize_features": cfg.standardize_features,
        },
        "feature_standardizer": _std_to(pipe.feature_standardizer),
        "pca": {
            "mean": _arr(pipe.pca.mean),
            "components": _arr(pipe.pca.components),
            "explained_variance": _arr(pipe.pca.explained_variance),
        },
        "classifier": clf,
        "metadata": pipe.metadata,
    }


def from_dict(d: dict[str, Any]) -> FittedPipeline:
    version = int(d.get("format_version", -1))
    if version > FORMAT_VERSION:
        raise VersionMismatch(version, FORMAT_VERSION)
    if version < 1:
        raise DatasetError(f"unsupported bundle format_version {version}")
    p = d["pipeline"]
    w = p["wavelet"]
    cfg = PipelineConfig(
        window_len=int(p["window_len"]),
        wavelet=WaveletConfig(WaveletFamily(w["family"]), int(w["levels"]),
                              ThresholdRule(w["threshold_rule"]), Shrinkage(w["shrinkage"])),
        denoise_raw=bool(p["denoise_raw"]),
        n_components=int(p["n_components"]),
        standardize_features=bool(p["standardize_features"]),
    )
    pca = PcaModel(np.array(d["pca"]["mean"], dtype=float), np.array(d["pca"]["components"], dtype=float),
                   np.array(d["pca"]["explained_variance"], dtype=float))
    c = d["classifier"]
    if c["kind"] == "svm":
        clf = _svm_from(c, pca.n_components)
    else:
        clf = _mlp_from(c)
    pipe = FittedPipeline(cfg, pca, clf, _std_from(d["feature_standardizer"]), dict(d["metadata"]))
    if pipe.pca.n_components != (clf.n_features if pipe.kind == "svm" else clf.sizes[0]):
        raise DatasetError("bundle is inconsistent: classifier input does not match PCA output")
    return pipe


def dumps(pipe: FittedPipeline) -> str:
    return json.dumps(to_dict(pipe), indent=1, sort_keys=True, allow_nan=False) + "\n"


def loads(text: str) -> FittedPipeline:
    return from_dict(json.loads(text))


def save(pipe: FittedPipeline, path: str | Path) -> None:
    write_text_atomic(path, dumps(pipe))


def load(path: str | Path) -> FittedPipeline:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
