"""scikit-learn style wrappers around the encrypted kernels.

These estimators do no learning in the statistical sense. ``fit`` checks
shapes and fixes the public bounds, which is enough for the objects to work
with sklearn pipelines and tooling such as ``clone``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .argmax import ARGMAX_METHODS, NormBounds, PackingLayout, decode_one_hot, pack, unpack
from .backend import BackendParams, make_backend
from .ensemble import LogitBatch, labels_from_one_hot, run_vote
from .sign import SignConfig, build_sign, sign_eval


def _sign_config(est) -> SignConfig:
    return SignConfig(alpha=est.alpha, d_f=est.d_f, d_g=est.d_g, deg_f=est.degree, deg_g=est.degree)


def _bounds(d_min, d_max, X) -> NormBounds:
    lo = float(np.min(X)) if d_min is None else float(d_min)
    hi = float(np.max(X)) if d_max is None else float(d_max)
    if hi <= lo:
        # constant data: widen so the normalization stays defined
        hi = lo + 1.0
    return NormBounds(lo, hi)


class SignApproximator(TransformerMixin, BaseEstimator):
    """Element-wise composite sign approximation of values in ``[-1, 1]``.

    With ``backend=None`` the polynomials are applied in plaintext; with
    ``"exact"`` or ``"sim"`` the values are encrypted and evaluated slot-wise.
    """

    def __init__(self, alpha=12, d_f=2, d_g=2, degree=9, backend=None, seed=0):
        self.alpha = alpha
        self.d_f = d_f
        self.d_g = d_g
        self.degree = degree
        self.backend = backend
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False)
        self.n_features_in_ = X.shape[1] if X.ndim == 2 else 1
        self.sign_ = build_sign(_sign_config(self))
        return self

    def transform(self, X):
        check_is_fitted(self, "sign_")
        X = check_array(X, ensure_2d=False)
        if np.max(np.abs(X), initial=0.0) > 1.0:
            raise ValueError("SignApproximator expects inputs in [-1, 1]")
        if self.backend is None:
            return self.sign_(X)
        be = make_backend(self.backend, BackendParams(), seed=self.seed)
        flat = X.ravel()
        width = be.params.slot_count
        out = np.empty_like(flat)
        for start in range(0, flat.size, width):
            chunk = flat[start : start + width]
            ct = sign_eval(be, be.encrypt(chunk), self.sign_)
            out[start : start + chunk.size] = be.decrypt(ct)[: chunk.size]
        return out.reshape(X.shape)


class EncryptedArgmax(TransformerMixin, BaseEstimator):
    """Row-wise argmax computed on encrypted, packed rows.

    ``transform`` returns the rounded one-hot matrix; ``predict`` the column
    index of each row's winner. Bounds not given are taken from the data seen
    in ``fit``; the encrypted side only ever learns them as public constants.
    """

    def __init__(self, method="secpe", d_min=None, d_max=None, alpha=12, d_f=2, d_g=2, degree=9,
                 backend="exact", seed=0):
        self.method = method
        self.d_min = d_min
        self.d_max = d_max
        self.alpha = alpha
        self.d_f = d_f
        self.d_g = d_g
        self.degree = degree
        self.backend = backend
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X)
        if self.method not in ARGMAX_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        self.n_features_in_ = X.shape[1]
        self.bounds_ = _bounds(self.d_min, self.d_max, X)
        self.sign_ = build_sign(_sign_config(self))
        return self

    def _soft(self, X):
        check_is_fitted(self, "sign_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        be = make_backend(self.backend, BackendParams(), seed=self.seed)
        layout = PackingLayout(X.shape[1], be.params.slot_count)
        fn = ARGMAX_METHODS[self.method]
        parts = []
        for start in range(0, X.shape[0], layout.copies):
            rows = X[start : start + layout.copies]
            z = fn(be, pack(be, rows, layout, self.bounds_), layout, self.sign_)
            parts.append(unpack(be.decrypt(z), layout, rows.shape[0]))
        return np.vstack(parts) if parts else np.zeros((0, X.shape[1]))

    def transform(self, X):
        return decode_one_hot(self._soft(X))

    def predict(self, X):
        soft = self._soft(X)
        return labels_from_one_hot(decode_one_hot(soft), soft)


class PrivateEnsembleClassifier(ClassifierMixin, BaseEstimator):
    """Aggregate-then-argmax over per-prompt logits of shape ``(samples, m, n)``.

    ``classes`` names the ``n`` logit columns; by default they are
    ``0 .. n-1``. Labels passed to ``fit`` are only checked against them.
    """

    def __init__(self, method="secpe", d_min=None, d_max=None, classes=None, alpha=12, d_f=2, d_g=2,
                 degree=9, backend="exact", seed=0, n_jobs=1):
        self.method = method
        self.d_min = d_min
        self.d_max = d_max
        self.classes = classes
        self.alpha = alpha
        self.d_f = d_f
        self.d_g = d_g
        self.degree = degree
        self.backend = backend
        self.seed = seed
        self.n_jobs = n_jobs

    @staticmethod
    def _check_3d(X):
        X = check_array(X, allow_nd=True, ensure_2d=False)
        if X.ndim != 3:
            raise ValueError(f"expected logits of shape (samples, m, n), got {X.shape}")
        return X

    def fit(self, X, y=None):
        X = self._check_3d(X)
        n = X.shape[2]
        self.classes_ = np.arange(n) if self.classes is None else np.asarray(self.classes)
        if self.classes_.shape != (n,):
            raise ValueError(f"classes must name all {n} logit columns")
        if y is not None:
            unknown = np.setdiff1d(np.asarray(y), self.classes_)
            if unknown.size:
                raise ValueError(f"labels {unknown.tolist()} are not among the classes")
        if self.method not in ARGMAX_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        self.n_prompts_ = X.shape[1]
        self.bounds_ = _bounds(self.d_min, self.d_max, X)
        self.sign_ = build_sign(_sign_config(self))
        return self

    def predict(self, X):
        check_is_fitted(self, "sign_")
        X = self._check_3d(X)
        if X.shape[1:] != (self.n_prompts_, self.classes_.size):
            raise ValueError(f"X has shape {X.shape[1:]} per sample, expected {(self.n_prompts_, self.classes_.size)}")
        batch = LogitBatch.from_array(X, self.bounds_)
        be = make_backend(self.backend, BackendParams(), seed=self.seed)
        report = run_vote(batch, be, self.sign_, method=self.method, n_jobs=self.n_jobs)
        self.last_counters_ = report.counters
        return self.classes_[np.array([r.label for r in report.results], dtype=np.int64)]
