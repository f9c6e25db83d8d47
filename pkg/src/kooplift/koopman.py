"""Construction of Koopman eigenfunctions for a stable closed-loop system.

The recipe: scale states into the unit cube, take the principal eigenfunctions
``psi_j(y) = <y, w_j>`` of the scaled closed-loop matrix (``w_j`` from the
adjoint eigenvector basis), then form products ``prod_j psi_j^{m_j}`` over a
set of nonnegative integer exponent tuples. Each product is again an
eigenfunction of the linear flow, with eigenvalue ``sum_j m_j lambda_j``.
Composition with a learned diffeomorphism ``c(x) = x + h(x)`` transports the
construction to the nonlinear system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffeo import DiffeoModel
from .linalg import EigenDecomposition, eigen_real


class UnstableClosedLoop(ValueError):
    """Closed-loop matrix is not Hurwitz."""


class InsufficientDegree(ValueError):
    """The degree bound cannot supply the requested number of tuples."""


@dataclass(frozen=True)
class ScalingMap:
    """Componentwise scaling ``g(y) = y / radii`` onto the unit cube."""

    radii: np.ndarray  # (d,), positive

    def apply(self, Y: np.ndarray) -> np.ndarray:
        return np.asarray(Y, dtype=float) / self.radii

    @staticmethod
    def from_data(states: np.ndarray, margin: float = 1.1) -> "ScalingMap":
        """Radii covering the data per dimension, inflated by ``margin``.

        A dimension that never leaves zero gets radius 1 so the map stays
        invertible.
        """
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if margin <= 0:
            raise ValueError("margin must be positive")
        peak = np.max(np.abs(states), axis=0)
        radii = np.where(peak > 0, margin * peak, 1.0)
        radii.setflags(write=False)
        return ScalingMap(radii=radii)


def principal_eigenpairs(A_cl: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a Hurwitz closed-loop matrix.

    The adjoint columns ``w_j`` define the principal eigenfunctions
    ``psi_j(y) = <y, w_j>`` of the linear flow ``ydot = A_cl y``.

    Raises
    ------
    UnstableClosedLoop
        If any eigenvalue has nonnegative real part.
    ComplexSpectrum, DefectiveMatrix
        Propagated from the eigensolver.
    """
    dec = eigen_real(A_cl)
    if np.max(dec.eigenvalues) >= 0:
        raise UnstableClosedLoop(
            f"closed-loop eigenvalues must have negative real part, got {dec.eigenvalues}"
        )
    return dec


def _compositions(total: int, parts: int):
    # nonnegative integer tuples summing to `total`, lexicographically descending
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def generate_tuples(d: int, count: int, max_degree: int) -> np.ndarray:
    """First ``count`` exponent tuples in graded lexicographic order.

    Tuples of total degree 1 come first (the principal eigenfunctions
    themselves), then degree 2, and so on up to ``max_degree``; ties within a
    degree break lexicographically descending. Returns an (count, d) int array.

    Raises
    ------
    InsufficientDegree
        If fewer than ``count`` tuples exist with degree <= ``max_degree``.
    """
    if d < 1 or count < 0 or max_degree < 1:
        raise ValueError("need d >= 1, count >= 0, max_degree >= 1")
    out: list[tuple[int, ...]] = []
    for degree in range(1, max_degree + 1):
        for tup in _compositions(degree, d):
            out.append(tup)
            if len(out) == count:
                exps = np.array(out, dtype=int)
                exps.setflags(write=False)
                return exps
    if count == 0:
        return np.zeros((0, d), dtype=int)
    raise InsufficientDegree(
        f"only {len(out)} tuples of degree <= {max_degree} exist in {d} variables, "
        f"need {count}"
    )


def tuple_eigenvalue(exponents: np.ndarray, eigenvalues: np.ndarray) -> float:
    """Continuous-time eigenvalue of a product eigenfunction: sum_j m_j lambda_j."""
    return float(np.asarray(exponents, dtype=float) @ np.asarray(eigenvalues, dtype=float))


@dataclass(frozen=True)
class EigenfunctionBasis:
    """A family of product eigenfunctions ``phi_i(x) = prod_j psi_j(g(c(x)))^{m_ij}``.

    ``c(x) = x + h(x)`` is the learned diffeomorphism (identity when ``diffeo``
    is None), ``g`` the scaling map, and ``psi_j`` the principal eigenfunctions
    of the scaled closed-loop matrix.
    """

    exponents: np.ndarray  # (N, d) int
    eigenvalues: np.ndarray  # (N,) continuous-time eigenvalues
    principal: EigenDecomposition  # of the scaled closed-loop matrix
    scaling: ScalingMap
    diffeo: DiffeoModel | None = None

    @property
    def n_functions(self) -> int:
        return self.exponents.shape[0]

    @property
    def state_dim(self) -> int:
        return self.exponents.shape[1]

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Evaluate all eigenfunctions at states ``X``.

        Parameters
        ----------
        X : (M, d) or (d,) array of original (unscaled) states.

        Returns
        -------
        (M, N) array, or (N,) for a single state.
        """
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.state_dim:
            raise ValueError(f"expected states of dimension {self.state_dim}, got {X.shape[1]}")
        C = X if self.diffeo is None else X + self.diffeo.predict(X)
        Psi = self.scaling.apply(C) @ self.principal.W
        Phi = np.prod(Psi[:, None, :] ** self.exponents[None, :, :], axis=2)
        return Phi[0] if single else Phi

    def to_dict(self) -> dict:
        return {
            "exponents": self.exponents.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "principal": {
                "eigenvalues": self.principal.eigenvalues.tolist(),
                "V": self.principal.V.tolist(),
                "W": self.principal.W.tolist(),
            },
            "scaling_radii": self.scaling.radii.tolist(),
            "diffeo": None if self.diffeo is None else self.diffeo.to_dict(),
        }

    @staticmethod
    def from_dict(data: dict) -> "EigenfunctionBasis":
        principal = EigenDecomposition(
            eigenvalues=_frozen(data["principal"]["eigenvalues"]),
            V=_frozen(data["principal"]["V"]),
            W=_frozen(data["principal"]["W"]),
        )
        diffeo = None if data["diffeo"] is None else DiffeoModel.from_dict(data["diffeo"])
        return EigenfunctionBasis(
            exponents=_frozen(data["exponents"], dtype=int),
            eigenvalues=_frozen(data["eigenvalues"]),
            principal=principal,
            scaling=ScalingMap(radii=_frozen(data["scaling_radii"])),
            diffeo=diffeo,
        )


def _frozen(lists, dtype=float) -> np.ndarray:
    a = np.array(lists, dtype=dtype)
    a.setflags(write=False)
    return a


def build_basis(
    A_cl: np.ndarray,
    states: np.ndarray,
    count: int,
    max_degree: int,
    margin: float = 1.1,
    diffeo: DiffeoModel | None = None,
) -> EigenfunctionBasis:
    """Assemble an eigenfunction basis from the closed-loop matrix and data.

    Parameters
    ----------
    A_cl : (d, d) Hurwitz matrix of the linearized closed loop (original units).
    states : (M, d) training states used to fit the scaling map.
    count : number of eigenfunctions.
    max_degree : largest product degree to draw tuples from.
    margin : scaling inflation factor.
    diffeo : learned diffeomorphism, or None for the identity.
    """
    A_cl = np.asarray(A_cl, dtype=float)
    scaling = ScalingMap.from_data(states, margin)
    # similarity transform of the closed loop into scaled coordinates
    A_scaled = A_cl * (scaling.radii[None, :] / scaling.radii[:, None])
    principal = principal_eigenpairs(A_scaled)

    # Rescale each principal pair so psi_j peaks at 1 in magnitude over the
    # training data. Eigenfunctions are closed under scalar multiples, so
    # this changes nothing structurally, but without it the adjoint vectors
    # of a non-normal closed loop can have norms in the hundreds and the
    # degree-p products then span many orders of magnitude, wrecking the
    # conditioning of every downstream regression. Scaling w_j down and v_j
    # up by the same factor keeps W^T V = I exact.
    C = states if diffeo is None else states + diffeo.predict(states)
    peaks = np.abs(scaling.apply(C) @ principal.W).max(axis=0)
    peaks[peaks == 0.0] = 1.0
    principal = EigenDecomposition(
        eigenvalues=principal.eigenvalues,
        V=_frozen(principal.V * peaks[None, :]),
        W=_frozen(principal.W / peaks[None, :]),
    )

    exponents = generate_tuples(A_cl.shape[0], count, max_degree)
    eigenvalues = exponents @ principal.eigenvalues
    eigenvalues.setflags(write=False)
    return EigenfunctionBasis(
        exponents=exponents,
        eigenvalues=eigenvalues,
        principal=principal,
        scaling=scaling,
        diffeo=diffeo,
    )
