"""Dense real linear algebra substrate.

Eigendecompositions with an adjoint (left) eigenvector basis, elastic-net
regression by cyclic coordinate descent, minimum-norm least squares, and the
matrix exponential. Everything operates on plain float64 ndarrays.

Conventions: eigenvalues are sorted descending by real part. The adjoint
basis ``W`` satisfies ``W.T @ V = I``, so ``<v_j, w_k> = delta_jk`` and the
columns of ``W`` are eigenvectors of ``A.T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class ComplexSpectrum(ValueError):
    """Matrix expected to have a real spectrum has complex eigenvalues."""


class DefectiveMatrix(ValueError):
    """Eigenvector basis is numerically unusable (repeated eigenvalues or an
    ill-conditioned eigenvector matrix)."""


class NotConverged(RuntimeError):
    """Iterative solver hit its iteration cap.

    Carries the iteration count and last iterate so the caller can decide
    whether to accept the partial solution.
    """

    def __init__(self, message: str, iterations: int, beta: np.ndarray | None = None):
        super().__init__(message)
        self.iterations = iterations
        self.beta = beta


@dataclass(frozen=True)
class EigenDecomposition:
    """Real eigenvalues with right (V) and adjoint (W) eigenvector bases.

    Columns ``v_j`` of V and ``w_j`` of W satisfy ``A v_j = lambda_j v_j``,
    ``A.T w_j = lambda_j w_j`` and ``W.T @ V = I``.
    """

    eigenvalues: np.ndarray  # (n,), descending by real part
    V: np.ndarray  # (n, n), right eigenvectors in columns
    W: np.ndarray  # (n, n), adjoint eigenvectors in columns


def eigen_real(A: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a real matrix with distinct real eigenvalues.

    Parameters
    ----------
    A : (n, n) array

    Returns
    -------
    EigenDecomposition
        Eigenvalues sorted descending, right basis V (unit columns) and the
        biorthonormal adjoint basis ``W = inv(V).T``.

    Raises
    ------
    ComplexSpectrum
        If any eigenvalue has imaginary part above ``1e-9 * max(||A||_F, 1)``.
    DefectiveMatrix
        If eigenvalues are not distinct at the same relative scale, or
        ``cond(V) > 1e12``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.linalg.norm(A, "fro"), 1.0)
    lam, V = np.linalg.eig(A)
    if np.iscomplexobj(lam):
        if np.max(np.abs(lam.imag)) > 1e-9 * scale:
            raise ComplexSpectrum(
                f"matrix has complex eigenvalues {np.sort_complex(lam)}"
            )
        lam = lam.real
        V = V.real
    order = np.argsort(-lam)
    lam = lam[order].copy()
    V = V[:, order].copy()
    if lam.size > 1 and np.min(-np.diff(lam)) <= 1e-8 * scale:
        raise DefectiveMatrix(f"eigenvalues are not distinct: {lam}")
    if np.linalg.cond(V) > 1e12:
        raise DefectiveMatrix("eigenvector matrix is ill-conditioned")
    # contiguous copy: a transposed view would make matmul results depend on
    # memory layout, breaking bit-level agreement with deserialized copies
    W = np.ascontiguousarray(np.linalg.inv(V).T)
    return EigenDecomposition(eigenvalues=lam, V=V, W=W)


def _soft_threshold(z: np.ndarray | float, gamma: float):
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def elastic_net(
    X: np.ndarray,
    y: np.ndarray,
    l1: float,
    l2: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Minimize (1/2n)||y - X b||^2 + l1*||b||_1 + (l2/2)*||b||^2.

    Cyclic coordinate descent with a running residual; a sweep that changes
    no coordinate by ``tol`` or more terminates the iteration.

    Parameters
    ----------
    X : (n, p) array
    y : (n,) array
    l1, l2 : float
        Nonnegative penalty weights.

    Returns
    -------
    (p,) coefficient vector.

    Raises
    ------
    NotConverged
        If ``max_iter`` sweeps complete without meeting ``tol``; the partial
        solution rides on the exception.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes X {X.shape}, y {y.shape}")
    if l1 < 0 or l2 < 0:
        raise ValueError("penalties must be nonnegative")
    n, p = X.shape
    beta = np.zeros(p)
    col_sq = np.einsum("ij,ij->j", X, X) / n
    r = y.copy()
    for sweep in range(1, int(max_iter) + 1):
        delta = 0.0
        for j in range(p):
            xj = X[:, j]
            rho = xj @ r / n + col_sq[j] * beta[j]
            denom = col_sq[j] + l2
            b_new = 0.0 if denom == 0.0 else float(_soft_threshold(rho, l1)) / denom
            d = b_new - beta[j]
            if d != 0.0:
                r -= d * xj
                beta[j] = b_new
                delta = max(delta, abs(d))
        if delta < tol:
            return beta
    raise NotConverged(
        f"coordinate descent did not reach tol={tol} in {max_iter} sweeps",
        iterations=int(max_iter),
        beta=beta,
    )


def elastic_net_multi(
    X: np.ndarray,
    Y: np.ndarray,
    l1: float,
    l2: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Column-wise elastic net for a matrix of targets.

    Runs the same per-column coordinate updates as :func:`elastic_net`, in
    lockstep across columns on the Gram matrix; the problems stay independent
    and the fixed point per column is identical. Returns (p, q) coefficients.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError(f"incompatible shapes X {X.shape}, Y {Y.shape}")
    if l1 < 0 or l2 < 0:
        raise ValueError("penalties must be nonnegative")
    n, p = X.shape
    q = Y.shape[1]
    G = X.T @ X / n
    R0 = X.T @ Y / n
    B = np.zeros((p, q))
    diag = np.diag(G).copy()
    for sweep in range(1, int(max_iter) + 1):
        delta = 0.0
        for j in range(p):
            rho = R0[j] - G[j] @ B + diag[j] * B[j]
            denom = diag[j] + l2
            b_new = np.zeros(q) if denom == 0.0 else _soft_threshold(rho, l1) / denom
            d = np.max(np.abs(b_new - B[j]))
            if d > 0.0:
                B[j] = b_new
                delta = max(delta, d)
        if delta < tol:
            return B
    raise NotConverged(
        f"coordinate descent did not reach tol={tol} in {max_iter} sweeps",
        iterations=int(max_iter),
        beta=B,
    )


def ridge(X: np.ndarray, Y: np.ndarray, l2: float) -> np.ndarray:
    """Closed-form minimizer of (1/2n)||Y - X B||^2 + (l2/2)||B||^2.

    With ``l2 = 0`` this is the minimum-norm least-squares solution. Targets
    may be a vector or a matrix of columns.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    if l2 == 0.0:
        return lstsq(X, Y)
    n, p = X.shape
    G = X.T @ X / n + l2 * np.eye(p)
    return scipy.linalg.solve(G, X.T @ Y / n, assume_a="pos")


def subgradient_residual(
    X: np.ndarray, y: np.ndarray, beta: np.ndarray, l1: float, l2: float
) -> float:
    """Max violation of the elastic-net stationarity conditions at ``beta``.

    For each coordinate, ``g_j = X_j.T (X beta - y)/n + l2*beta_j`` must equal
    ``-l1*sign(beta_j)`` where ``beta_j != 0`` and satisfy ``|g_j| <= l1``
    elsewhere. Returns the largest excess, zero at an exact optimum.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    g = X.T @ (X @ beta - y) / n + l2 * beta
    active = beta != 0
    viol_active = np.abs(g[active] + l1 * np.sign(beta[active]))
    viol_zero = np.maximum(np.abs(g[~active]) - l1, 0.0)
    pieces = np.concatenate([viol_active, viol_zero])
    return float(pieces.max()) if pieces.size else 0.0


def lstsq(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of ``A X = B`` (SVD-based)."""
    return np.linalg.lstsq(np.asarray(A, dtype=float), np.asarray(B, dtype=float), rcond=None)[0]


def expm(A: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with Pade approximation)."""
    return scipy.linalg.expm(np.asarray(A, dtype=float))
