"""Linearized eigenproblem at a steady state in the weighted measure.

In the measure d(mu) = S^{1-m} dvol the operator K^mu(f) = int K f d(mu) is
symmetric; its matrix form sqrt(mu) K sqrt(mu) is solved densely (or
iteratively for the top block at large N) and mapped back to eigenfields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import ConfigError, NumericalError
from .kernel import KernelOperator, apply

__all__ = ["SpectrumResult", "linearized_spectrum", "predict_linear_growth"]

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray    # descending
    psi: np.ndarray            # (k, N), orthonormal in L^2(mu)
    phi: np.ndarray            # (k, N), phi = S^{1-m} psi
    mu: np.ndarray             # measure weights S^{1-m} w
    eig_residuals: np.ndarray  # ||K^mu psi - lam psi||_mu per pair


def _sign_fix(fields):
    for row in fields:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return fields


def _symmetric_top_k(A, k):
    if A.shape[0] <= DENSE_LIMIT or k > A.shape[0] // 4:
        vals, vecs = np.linalg.eigh(A)
        return vals[::-1][:k], vecs[:, ::-1][:, :k]
    from scipy.sparse.linalg import eigsh

    vals, vecs = eigsh(A, k=k, which="LA")
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def linearized_spectrum(kern: KernelOperator, S: np.ndarray, m: float,
                        k: int) -> SpectrumResult:
    """Top-k spectrum of the steady-state-weighted operator.

    Requires K(S) = S^m to hold to 1e-8 (relative sup norm); the structural
    eigenpair psi = S^m with eigenvalue 1 is then present by construction.
    """
    S = np.asarray(S, dtype=float)
    if not (S > 0).all():
        raise ConfigError("steady state must be strictly positive")
    if not 1 <= k <= kern.size:
        raise ConfigError(f"k={k} out of range 1..{kern.size}")
    target = S ** m
    resid = float(np.max(np.abs(apply(kern, S) - target)) / np.max(np.abs(target)))
    if resid > 1e-8:
        raise ConfigError(f"steady-state residual {resid:.3e} exceeds 1e-8; "
                          "solve to tolerance before calling the spectrum")
    mu = S ** (1.0 - m) * kern.geom.weights
    root = np.sqrt(mu)
    A = root[:, None] * kern.matrix * root[None, :]
    vals, vecs = _symmetric_top_k(A, k)
    psi = _sign_fix(np.ascontiguousarray((vecs / root[:, None]).T))
    phi = S ** (1.0 - m) * psi
    resids = np.empty(k)
    for i in range(k):
        image = _accel.matvec_weighted(kern.matrix, psi[i], mu)
        diff = image - vals[i] * psi[i]
        resids[i] = np.sqrt(float(np.dot(mu, diff * diff))) / max(abs(vals[i]), 1e-300)
    if np.any(resids > 1e-6):
        raise NumericalError(f"eigenpair residuals too large: {resids.max():.3e}")
    return SpectrumResult(vals, psi, phi, mu, resids)


def predict_linear_growth(kern: KernelOperator):
    """Top eigenpair of the plain weighted operator (mu = quadrature weights).

    Raw-flow solutions at m=1 grow like e^{lam1 t} phi1; phi1 is returned with
    the positive sign convention and is strictly positive (Perron-Frobenius
    for the positive kernel matrix).
    """
    w = kern.geom.weights
    root = np.sqrt(w)
    A = root[:, None] * kern.matrix * root[None, :]
    vals, vecs = _symmetric_top_k(A, 1)
    phi1 = _sign_fix(np.ascontiguousarray((vecs / root[:, None]).T))[0]
    if not (phi1 > 0).all():
        raise NumericalError("leading eigenfield is not strictly positive")
    return float(vals[0]), phi1
