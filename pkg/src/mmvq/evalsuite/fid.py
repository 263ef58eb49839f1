"""Frechet distance between Gaussian fits of two feature sets.

||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the matrix
square root taken through the symmetric eigendecomposition of
S_a^{1/2} S_b S_a^{1/2}. Covariances use the unbiased (n-1) estimator.
When a side has too few samples for a well-conditioned covariance, a ridge
of 1e-6 is added and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RIDGE = 1e-6
NEG_EIG_TOL = -1e-8


@dataclass
class FidResult:
    value: float
    ridged: bool


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < NEG_EIG_TOL:
        raise ValueError(f"covariance has negative eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid_detailed(features_a: np.ndarray, features_b: np.ndarray) -> FidResult:
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature sets must be 2-D with equal width, got {a.shape}, {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least two samples per side")
    d = a.shape[1]
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    sig_a = np.cov(a, rowvar=False, ddof=1)
    sig_b = np.cov(b, rowvar=False, ddof=1)
    sig_a = np.atleast_2d(sig_a)
    sig_b = np.atleast_2d(sig_b)

    ridged = False
    if a.shape[0] <= d or b.shape[0] <= d:
        sig_a = sig_a + RIDGE * np.eye(d)
        sig_b = sig_b + RIDGE * np.eye(d)
        ridged = True

    root_a = _psd_sqrt(sig_a)
    inner = root_a @ sig_b @ root_a
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigvalsh(inner)
    if vals.min() < NEG_EIG_TOL:
        raise ValueError(f"cross term has negative eigenvalue {vals.min():.3e}")
    tr_sqrt = float(np.sqrt(np.clip(vals, 0.0, None)).sum())

    delta = mu_a - mu_b
    value = float(delta @ delta + np.trace(sig_a) + np.trace(sig_b) - 2.0 * tr_sqrt)
    return FidResult(value, ridged)


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    return fid_detailed(features_a, features_b).value
