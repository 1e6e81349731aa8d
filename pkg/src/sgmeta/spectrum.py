"""Hessian spectra, index classification and log-space eigenvalue products."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .fields import FourierField, ModelParams, derivative_coeffs, hessian_matrix, to_orthonormal

ZERO_REL_TOL = 1e-8


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    neg_indices: tuple
    zero_indices: tuple
    mu: float | None = None
    zero_vector_overlap: float | None = None
    zero_threshold: float = 0.0
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    residual: float = 0.0

    @property
    def neg_count(self) -> int:
        return len(self.neg_indices)

    @property
    def zero_count(self) -> int:
        return len(self.zero_indices)

    @property
    def is_transition_state(self) -> bool:
        return self.neg_count == 1

    def positive_eigenvalues(self) -> np.ndarray:
        skip = set(self.neg_indices) | set(self.zero_indices)
        keep = [i for i in range(len(self.eigenvalues)) if i not in skip]
        return self.eigenvalues[keep]

    def summary(self, n_lowest: int = 8) -> dict:
        return {
            "dimension": int(len(self.eigenvalues)),
            "lowest_eigenvalues": [float(x) for x in self.eigenvalues[:n_lowest]],
            "largest_eigenvalue": float(self.eigenvalues[-1]),
            "neg_count": self.neg_count,
            "zero_count": self.zero_count,
            "mu": self.mu,
            "zero_vector_overlap": self.zero_vector_overlap,
        }


def zero_threshold(eigenvalues: np.ndarray) -> float:
    return ZERO_REL_TOL * max(1.0, float(np.max(eigenvalues)))


def spectrum_at(u: FourierField, p: ModelParams, keep_vectors: bool = True) -> SpectrumReport:
    H = hessian_matrix(u, p)
    lam, vecs = linalg.eigh(H)
    thr = zero_threshold(lam)
    zero = tuple(int(i) for i in np.flatnonzero(np.abs(lam) < thr))
    neg = tuple(int(i) for i in np.flatnonzero(lam <= -thr))
    mu = float(-lam[0]) if lam[0] <= -thr else None

    overlap = None
    if zero:
        t = to_orthonormal(derivative_coeffs(u.coeffs))
        tn = np.linalg.norm(t)
        if tn > 0:
            # project the tangent onto the whole (numerically) zero eigenspace
            V = vecs[:, list(zero)]
            overlap = float(np.linalg.norm(V.T @ t) / tn)
    res = float(np.max(np.linalg.norm(H @ vecs - vecs * lam, axis=0)))
    return SpectrumReport(
        eigenvalues=lam,
        neg_indices=neg,
        zero_indices=zero,
        mu=mu,
        zero_vector_overlap=overlap,
        zero_threshold=thr,
        eigenvectors=vecs if keep_vectors else None,
        residual=res,
    )


def log_product_ratio(num_eigs, den_eigs) -> float:
    """sum(log num) - sum(log den), all entries strictly positive."""
    num = np.asarray(num_eigs, dtype=float).ravel()
    den = np.asarray(den_eigs, dtype=float).ravel()
    for name, arr in (("numerator", num), ("denominator", den)):
        bad = np.flatnonzero(~(arr > 0))
        if bad.size:
            i = int(bad[0])
            raise ValueError(f"{name} entry {i} is not strictly positive ({arr[i]!r})")
    return math.fsum(np.log(num)) - math.fsum(np.log(den))


def reference_eigenvalues(gamma_beta: float, N: int, include_zero: bool = True) -> np.ndarray:
    """Eigenvalues n^2 + gamma*beta of the Hessian at a minimum."""
    n = np.arange(-N, N + 1) if include_zero else np.concatenate(
        [np.arange(-N, 0), np.arange(1, N + 1)])
    return n.astype(float) ** 2 + gamma_beta


def constant_saddle_log_ratio(gamma_beta: float, N: int) -> float:
    """log prod_{0<|n|<=N} (n^2 - gb)/(n^2 + gb), for gb < 1."""
    n = np.concatenate([np.arange(-N, 0), np.arange(1, N + 1)]).astype(float)
    return log_product_ratio(n ** 2 - gamma_beta, n ** 2 + gamma_beta)
