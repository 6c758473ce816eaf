"""Maximum-entropy (multinomial logistic) intent classifier."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

FORMAT = "paraug-maxent"
VERSION = 1


def length_bucket(n: int) -> str:
    if n <= 2:
        return "len:1-2"
    if n <= 5:
        return "len:3-5"
    return "len:6+"


def ic_features(tokens: Sequence[str]) -> Counter:
    feats: Counter = Counter()
    for t in tokens:
        feats[f"uni:{t}"] += 1
    for a, b in zip(tokens, tokens[1:]):
        feats[f"bi:{a}_{b}"] += 1
    feats[length_bucket(len(tokens))] += 1
    feats["bias"] += 1
    return feats


@dataclass
class MaxEntModel:
    labels: list[str]  # sorted; argmax ties go to the first
    features: dict[str, int]
    weights: np.ndarray  # (n_features, n_labels)

    def scores(self, tokens: Sequence[str]) -> np.ndarray:
        s = np.zeros(len(self.labels))
        for f, c in ic_features(tokens).items():
            j = self.features.get(f)
            if j is not None:
                s += c * self.weights[j]
        return s

    def predict_proba(self, tokens: Sequence[str]) -> np.ndarray:
        s = self.scores(tokens)
        p = np.exp(s - s.max())
        return p / p.sum()

    def to_dict(self) -> dict:
        inv = sorted(self.features, key=self.features.get)
        return {
            "format": FORMAT,
            "version": VERSION,
            "labels": self.labels,
            "weights": {f: dict(zip(self.labels, map(float, self.weights[self.features[f]])))
                        for f in inv},
        }

    @classmethod
    def from_dict(cls, d: dict) -> MaxEntModel:
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError("not a maxent model file of a supported version")
        labels = list(d["labels"])
        feats = {f: i for i, f in enumerate(d["weights"])}
        w = np.array([[d["weights"][f][l] for l in labels] for f in feats]).reshape(len(feats), len(labels))
        return cls(labels, feats, w)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> MaxEntModel:
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def classify(model: MaxEntModel, tokens: Sequence[str]) -> tuple[str, float]:
    p = model.predict_proba(tokens)
    k = int(np.argmax(p))
    return model.labels[k], float(p[k])


def _design(data, features):
    rows, cols, vals = [], [], []
    for i, (tokens, _) in enumerate(data):
        for f, c in ic_features(tokens).items():
            rows.append(i)
            cols.append(features[f])
            vals.append(c)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(data), len(features)))


def objective(model: MaxEntModel, X, y: np.ndarray, l2: float) -> float:
    """Conditional log-likelihood minus (l2 / 2) * ||w||^2."""
    s = X @ model.weights
    s = s - s.max(axis=1, keepdims=True)
    logp = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
    return float(logp[np.arange(len(y)), y].sum() - 0.5 * l2 * np.sum(model.weights ** 2))


def train_ic(
    data: Sequence[tuple[Sequence[str], str]],
    l2: float = 0.1,
    epochs: int = 100,
    lr: float = 0.5,
    seed: int = 0,
    history: list | None = None,
) -> MaxEntModel:
    """Full-batch gradient ascent on the L2-regularized log-likelihood.

    Each step moves ``lr`` along the gradient of the objective divided by the
    number of examples.  Training is deterministic; ``seed`` is accepted for
    interface symmetry and unused.
    """
    labels = sorted({intent for _, intent in data})
    if len(labels) < 2:
        raise ValueError("intent classifier needs at least two distinct intents")
    features: dict[str, int] = {}
    for tokens, _ in data:
        for f in ic_features(tokens):
            features.setdefault(f, len(features))
    X = _design(data, features)
    label_idx = {l: i for i, l in enumerate(labels)}
    y = np.array([label_idx[i] for _, i in data])
    Y = np.zeros((len(data), len(labels)))
    Y[np.arange(len(y)), y] = 1.0
    model = MaxEntModel(labels, features, np.zeros((len(features), len(labels))))
    n = len(data)
    for _ in range(epochs):
        s = X @ model.weights
        s -= s.max(axis=1, keepdims=True)
        p = np.exp(s)
        p /= p.sum(axis=1, keepdims=True)
        grad = X.T @ (Y - p) - l2 * model.weights
        model.weights = model.weights + (lr / n) * grad
        if history is not None:
            history.append(objective(model, X, y, l2))
    return model
