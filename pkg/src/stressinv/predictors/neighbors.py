"""K-nearest-neighbors regression with deterministic tie-breaking."""

from __future__ import annotations

import numpy as np


class KNNRegressor:
    """Unweighted mean of the k nearest training targets (Euclidean).

    Distance ties resolve to the lower training index (stable sort).
    """

    def __init__(self, k=5):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.x = None
        self.y = None

    def fit(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if self.k > x.shape[0]:
            raise ValueError(f"k={self.k} exceeds training size {x.shape[0]}")
        self.x = x
        self.y = y
        return self

    def predict(self, q):
        q = np.asarray(q, dtype=np.float64)
        single = q.ndim == 1
        if single:
            q = q[None, :]
        out = np.empty((q.shape[0], self.y.shape[1]))
        for i, row in enumerate(q):
            dist = np.sqrt(((self.x - row) ** 2).sum(axis=1))
            order = np.argsort(dist, kind="stable")
            out[i] = self.y[order[: self.k]].mean(axis=0)
        return out[0] if single else out

    def to_dict(self):
        return {"k": self.k, "x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, obj):
        model = cls(k=obj["k"])
        model.x = np.asarray(obj["x"], dtype=np.float64)
        model.y = np.asarray(obj["y"], dtype=np.float64)
        return model
