"""Feedback synthesis, condensed model predictive control, and a QP solver.

The MPC path eliminates the lifted state: stacking predicted outputs as
``X = M z0 + S U`` turns the tracking objective into a quadratic in the
control sequence alone,

    H = 2 (S' Qbar S + Rbar),   f = 2 S' Qbar (M z0 - taubar),

so the program size is the control dimension times the horizon, independent
of how large the lifting is. Box bounds on inputs and outputs become
two-sided rows ``lo <= G U <= hi``. The solver is an operator-splitting
(ADMM) method with over-relaxation, per-row penalty on equality rows, and
penalty adaptation; it warm starts between consecutive MPC steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .edmd import LiftedLinearModel
from .util import load_json, dump_json


class Uncontrollable(ValueError):
    """The pair (A, B) cannot place the requested poles."""


class Infeasible(RuntimeError):
    """Constraint bounds admit no point (some lo > hi)."""


class MaxIterations(RuntimeError):
    """Solver hit the iteration cap; carries the best iterate found."""

    def __init__(self, solution: "QpSolution"):
        super().__init__(
            f"no convergence in {solution.iterations} iterations "
            f"(primal {solution.primal_residual:.2e}, dual {solution.dual_residual:.2e})"
        )
        self.solution = solution


@dataclass(frozen=True)
class FeedbackGain:
    """Static feedback u = K (x - tau) with eig(A + B K) at the target poles."""

    K: np.ndarray  # (m, d)
    poles: tuple


def place_poles(A: np.ndarray, B: np.ndarray, poles) -> FeedbackGain:
    """Ackermann pole placement for single-input systems.

    Returns K in the ``u = K x`` convention, so the closed loop is A + B K.
    Raises :class:`Uncontrollable` when the controllability matrix is
    rank-deficient (relative tolerance 1e-9).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    d = A.shape[0]
    if B.shape[1] != 1:
        raise NotImplementedError("multi-input pole placement is not provided")
    poles = tuple(float(p) for p in poles)
    if len(poles) != d:
        raise ValueError(f"need {d} poles, got {len(poles)}")
    if len(set(poles)) != d or any(p >= 0 for p in poles):
        raise ValueError("poles must be distinct negative reals")
    b = B[:, 0]
    ctrb = np.empty((d, d))
    col = b.copy()
    for j in range(d):
        ctrb[:, j] = col
        col = A @ col
    svals = np.linalg.svd(ctrb, compute_uv=False)
    if svals[-1] <= 1e-9 * max(svals[0], 1.0):
        raise Uncontrollable("controllability matrix is rank-deficient")
    # desired characteristic polynomial evaluated at A (Horner)
    coeffs = np.poly(poles)
    pA = np.zeros((d, d))
    for c in coeffs:
        pA = pA @ A + c * np.eye(d)
    e_last = np.zeros(d)
    e_last[-1] = 1.0
    row = np.linalg.solve(ctrb.T, e_last)
    K = -(row @ pA)[None, :]
    achieved = np.sort(np.linalg.eigvals(A + B @ K))
    wanted = np.sort(np.asarray(poles, dtype=complex))
    if not np.allclose(achieved, wanted, atol=1e-6):
        raise Uncontrollable(f"pole placement inaccurate: got {achieved}, wanted {wanted}")
    return FeedbackGain(K=K, poles=poles)


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, quadratic weights, and box bounds for the tracking problem."""

    horizon: int
    Q: np.ndarray
    R: np.ndarray
    x_min: np.ndarray
    x_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    dt: float
    # weight multiplier on the final predicted state; 1.0 keeps every stage
    # equal, larger values pull finite-horizon plans all the way to the target
    terminal_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "Q", np.atleast_2d(np.asarray(self.Q, dtype=float)))
        object.__setattr__(self, "R", np.atleast_2d(np.asarray(self.R, dtype=float)))
        for name in ("x_min", "x_max", "u_min", "u_max"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name, W in (("Q", self.Q), ("R", self.R)):
            scale = max(np.max(np.abs(W)), 1.0)
            if np.max(np.abs(W - W.T)) > 1e-10 * scale:
                raise ValueError(f"{name} must be symmetric")
            if np.min(scipy.linalg.eigvalsh(W)) < -1e-10 * scale:
                raise ValueError(f"{name} must be positive semidefinite")
        if np.any(self.x_min > self.x_max) or np.any(self.u_min > self.u_max):
            raise ValueError("box bounds are not ordered")
        if self.Q.shape[0] != self.x_min.size or self.R.shape[0] != self.u_min.size:
            raise ValueError("weight and bound dimensions disagree")
        if not np.isfinite(self.terminal_weight) or self.terminal_weight < 0:
            raise ValueError("terminal_weight must be a nonnegative number")


@dataclass
class QpProblem:
    """min 0.5 u'Hu + f'u + const subject to lo <= G u <= hi."""

    H: np.ndarray
    f: np.ndarray
    G: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        scale = max(np.max(np.abs(self.H)), 1.0)
        if np.max(np.abs(self.H - self.H.T)) > 1e-10 * scale:
            raise ValueError("H must be symmetric")
        n = self.H.shape[0]
        if self.f.shape != (n,) or self.G.shape[1] != n:
            raise ValueError("inconsistent QP dimensions")
        if self.lo.shape != (self.G.shape[0],) or self.hi.shape != self.lo.shape:
            raise ValueError("bound rows do not match constraint rows")


@dataclass
class QpSolution:
    u: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    duals: np.ndarray


def _bound_list(v: np.ndarray) -> list:
    return [float(x) if np.isfinite(x) else ("inf" if x > 0 else "-inf") for x in v]


def qp_to_dict(qp: QpProblem) -> dict:
    return {
        "H": qp.H.tolist(),
        "f": qp.f.tolist(),
        "G": qp.G.tolist(),
        "lo": _bound_list(qp.lo),
        "hi": _bound_list(qp.hi),
        "const": qp.const,
    }


def qp_from_dict(data: dict) -> QpProblem:
    def bounds(values):
        return np.array([float(v) for v in values], dtype=float)

    return QpProblem(
        H=np.array(data["H"], dtype=float),
        f=np.array(data["f"], dtype=float),
        G=np.array(data["G"], dtype=float),
        lo=bounds(data["lo"]),
        hi=bounds(data["hi"]),
        const=float(data.get("const", 0.0)),
    )


def save_qp(path, qp: QpProblem) -> None:
    dump_json(qp_to_dict(qp), path)


def load_qp(path) -> QpProblem:
    return qp_from_dict(load_json(path))


def _equilibrate(H: np.ndarray, G: np.ndarray, f: np.ndarray):
    """Ruiz scaling of the stacked data matrix [[H, G'], [G, 0]].

    Returns (Hs, Gs, fs, d, e): diagonal scalings d (variables) and e
    (constraint rows) such that Hs = d H d, fs = d*f, Gs = e G d have rows
    and columns with infinity norms near one. MPC condensing mixes terminal
    weights in the thousands with effort weights near 1e-3 and constraint
    rows spanning similar extremes, and the splitting iteration stalls on
    such data unless it is scaled first. The cost itself is deliberately
    not rescaled: shrinking it to match an already-small scaled Hessian
    leaves nearly-linear geometry the iteration cannot close.
    """
    nv = H.shape[0]
    nc = G.shape[0]
    d = np.ones(nv)
    e = np.ones(nc)
    Hs = H.copy()
    Gs = G.copy()
    for _ in range(10):
        col_h = np.max(np.abs(Hs), axis=0)
        col_g = np.max(np.abs(Gs), axis=0) if nc else np.zeros(nv)
        dk = 1.0 / np.sqrt(np.maximum(np.maximum(col_h, col_g), 1e-12))
        ek = (
            1.0 / np.sqrt(np.maximum(np.max(np.abs(Gs), axis=1), 1e-12))
            if nc
            else np.zeros(0)
        )
        Hs = Hs * dk[None, :] * dk[:, None]
        if nc:
            Gs = Gs * ek[:, None] * dk[None, :]
        d *= dk
        e *= ek
    return Hs, Gs, d * f, d, e


def _kkt_error(H, f, G, lo, hi, u, y):
    """Primal violation and stationarity residual of (u, y) in original units."""
    Gu = G @ u
    rp = float(np.max(np.maximum(np.maximum(lo - Gu, Gu - hi), 0.0), initial=0.0))
    rd = float(np.max(np.abs(H @ u + f + G.T @ y), initial=0.0))
    return rp, rd


def _kkt_solve(H, f, G, lo, hi, act_lo, act_hi):
    """Equality-constrained solve pinning act_hi rows at hi, act_lo at lo.

    The indefinite system gets a small split regularization and two rounds
    of iterative refinement against the exact matrix. Returns (u, y) with y
    zero on inactive rows, or None when the factorization fails outright.
    """
    nv = f.size
    act = act_lo | act_hi
    na = int(np.sum(act))
    if na == 0:
        try:
            u = scipy.linalg.solve(H, -f, assume_a="sym")
        except (scipy.linalg.LinAlgError, ValueError):
            u = np.linalg.lstsq(H, -f, rcond=None)[0]
        if not np.all(np.isfinite(u)):
            return None
        return u, np.zeros(G.shape[0])
    Ga = G[act]
    b = np.where(act_hi, hi, lo)[act]
    K = np.zeros((nv + na, nv + na))
    K[:nv, :nv] = H
    K[:nv, nv:] = Ga.T
    K[nv:, :nv] = Ga
    delta = 1e-8 * max(1.0, float(np.max(np.abs(H))), float(np.max(np.abs(Ga))))
    Kr = K.copy()
    Kr[:nv, :nv] += delta * np.eye(nv)
    Kr[nv:, nv:] -= delta * np.eye(na)
    rhs = np.concatenate([-f, b])
    try:
        lu = scipy.linalg.lu_factor(Kr)
        s = scipy.linalg.lu_solve(lu, rhs)
        for _ in range(2):
            s = s + scipy.linalg.lu_solve(lu, rhs - K @ s)
    except (scipy.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(s)):
        return None
    u = s[:nv]
    y = np.zeros(G.shape[0])
    y[act] = s[nv:]
    return u, y


def _polish(H, f, G, lo, hi, u0, y0, equality, max_rounds=12):
    """Refine a solver iterate by active-set cleanup.

    Starts from the rows the iterate marks as tight (nonzero dual and the
    constraint value inside a small band of its bound) and alternates
    equality-constrained solves with set updates: rows whose multiplier has
    the wrong sign leave, rows the candidate violates enter. Returns
    (u, y, clean) for the best candidate found by worst-case KKT error,
    where clean means a round ended with no violated rows and no wrong-sign
    multipliers (for a convex problem such a point is optimal), or None
    when no solve succeeds. Intended for iterates already close to optimal,
    where the loop settles in a few rounds.
    """
    Gu0 = G @ u0
    band_lo = 1e-6 * (1.0 + np.abs(np.where(np.isfinite(lo), lo, 0.0)))
    band_hi = 1e-6 * (1.0 + np.abs(np.where(np.isfinite(hi), hi, 0.0)))
    act_lo = equality | ((y0 < 0.0) & np.isfinite(lo) & (Gu0 <= lo + band_lo))
    act_hi = ~equality & (y0 > 0.0) & np.isfinite(hi) & (Gu0 >= hi - band_hi)
    act_lo &= ~act_hi
    best = None
    best_err = np.inf
    for _ in range(max_rounds):
        out = _kkt_solve(H, f, G, lo, hi, act_lo, act_hi)
        if out is None:
            break
        u, y = out
        Gu = G @ u
        free = ~(act_lo | act_hi)
        viol_lo = free & np.isfinite(lo) & (Gu < lo - band_lo)
        viol_hi = free & np.isfinite(hi) & (Gu > hi + band_hi)
        sign_tol = 1e-10 * (1.0 + float(np.max(np.abs(y), initial=0.0)))
        wrong_lo = act_lo & ~equality & (y > sign_tol)
        wrong_hi = act_hi & (y < -sign_tol)
        clean = not (
            np.any(viol_lo) or np.any(viol_hi) or np.any(wrong_lo) or np.any(wrong_hi)
        )
        err = max(_kkt_error(H, f, G, lo, hi, u, y))
        if clean:
            return u, y, True
        if err < best_err:
            best_err = err
            best = (u, y, False)
        act_lo = (act_lo & ~wrong_lo) | viol_lo
        act_hi = (act_hi & ~wrong_hi) | viol_hi
    return best


def solve_qp(
    qp: QpProblem,
    tol: float = 1e-6,
    max_iter: int = 4000,
    x0: np.ndarray | None = None,
    y0: np.ndarray | None = None,
) -> QpSolution:
    """Operator-splitting solver for box-constrained quadratic programs.

    The data is Ruiz-equilibrated first; the iteration runs on the scaled
    problem with splitting parameter sigma 1e-6, penalty rho 0.1 (scaled 1e3
    on equality rows), over-relaxation 1.6, and penalty rebalancing every 25
    iterations. Success requires primal and dual residuals of the scaled
    problem under ``tol`` with standard relative scaling. The accepted
    iterate is then refined by an active-set polish (KKT solves on the rows
    the duals mark as tight), kept only when it does not worsen either
    measured optimality error, so solutions are typically exact to round-off
    rather than merely within tolerance. The same refinement is attempted on
    warm starts at entry and at a few checkpoints along the way; when it
    lands on a consistent active set meeting the tolerance outright, the
    solve returns early, which is what makes receding-horizon use cheap.
    Solution, duals, and the reported residuals are all in original units.
    Raises :class:`Infeasible` on crossed bounds upfront and
    :class:`MaxIterations` (carrying the best, possibly polished, iterate)
    at the cap.
    """
    H, f, G, lo, hi = qp.H, qp.f, qp.G, qp.lo, qp.hi
    nv = f.size
    nc = G.shape[0]
    both = np.isfinite(lo) & np.isfinite(hi)
    if np.any(lo > np.where(np.isfinite(hi), hi, np.inf) + 1e-12):
        raise Infeasible("some lower bound exceeds its upper bound")
    if nc == 0:
        try:
            u = scipy.linalg.solve(H, -f, assume_a="sym")
        except scipy.linalg.LinAlgError:
            u = np.linalg.lstsq(H, -f, rcond=None)[0]
        rd = float(np.max(np.abs(H @ u + f), initial=0.0))
        return QpSolution(
            u=u,
            objective=float(0.5 * u @ H @ u + f @ u + qp.const),
            iterations=0,
            primal_residual=0.0,
            dual_residual=rd,
            duals=np.zeros(0),
        )

    sigma = 1e-6
    alpha = 1.6
    rho_base = 0.1
    # equality rows are detected on the user's bounds, before any scaling
    equality = both & (np.where(both, hi - lo, 1.0) <= 1e-12)
    finite_bounds = np.concatenate([lo[np.isfinite(lo)], hi[np.isfinite(hi)]])
    feas_floor = 1e-9 * (
        1.0 + (float(np.max(np.abs(finite_bounds))) if finite_bounds.size else 0.0)
    )

    Hs, Gs, fs, d_scl, e_scl = _equilibrate(H, G, f)
    los = e_scl * lo
    his = e_scl * hi

    def factorize(rho_vec):
        mat = Hs + sigma * np.eye(nv) + (Gs.T * rho_vec) @ Gs
        return scipy.linalg.cho_factor(mat)

    rho = rho_base
    rho_vec = rho * np.where(equality, 1e3, 1.0)
    fac = factorize(rho_vec)

    # iterate in scaled variables; warm starts arrive in original units
    x = np.zeros(nv) if x0 is None else np.asarray(x0, dtype=float) / d_scl
    y = np.zeros(nc) if y0 is None else np.asarray(y0, dtype=float) / e_scl
    z = np.clip(Gs @ x, los, his)

    def finish_exact(k):
        # a clean active-set refinement of the current iterate is a global
        # optimum; accept it early when it meets the tolerance outright
        u_c = d_scl * x
        y_c = e_scl * y
        cand = _polish(H, f, G, lo, hi, u_c, y_c, equality, max_rounds=8)
        if cand is None or not cand[2]:
            return None
        uc, yc = cand[0], cand[1]
        Gu = G @ uc
        Hu = H @ uc
        Gty = G.T @ yc
        rp_c = float(np.max(np.maximum(np.maximum(lo - Gu, Gu - hi), 0.0), initial=0.0))
        rd_c = float(np.max(np.abs(Hu + f + Gty), initial=0.0))
        p_ok = rp_c <= tol * (1.0 + float(np.max(np.abs(Gu), initial=0.0)))
        d_sc = 1.0 + max(
            float(np.max(np.abs(Hu), initial=0.0)),
            float(np.max(np.abs(f), initial=0.0)),
            float(np.max(np.abs(Gty), initial=0.0)),
        )
        if not (p_ok and rd_c <= tol * d_sc):
            return None
        return QpSolution(
            u=uc,
            objective=float(0.5 * uc @ H @ uc + f @ uc + qp.const),
            iterations=k,
            primal_residual=rp_c,
            dual_residual=rd_c,
            duals=yc,
        )

    if y0 is not None and np.any(y != 0.0):
        found = finish_exact(0)
        if found is not None:
            return found

    best = None
    best_score = np.inf
    iterations = 0
    next_attempt = 50
    for k in range(1, max_iter + 1):
        iterations = k
        rhs = sigma * x - fs + Gs.T @ (rho_vec * z - y)
        xt = scipy.linalg.cho_solve(fac, rhs)
        zt = Gs @ xt
        x = alpha * xt + (1.0 - alpha) * x
        w = alpha * zt + (1.0 - alpha) * z
        z = np.clip(w + y / rho_vec, los, his)
        y = y + rho_vec * (w - z)

        Gx = Gs @ x
        Hx = Hs @ x
        Gty = Gs.T @ y
        rp = float(np.max(np.abs(Gx - z)))
        rd = float(np.max(np.abs(Hx + fs + Gty)))
        p_scale = 1.0 + max(np.max(np.abs(Gx)), np.max(np.abs(z)))
        d_scale = 1.0 + max(np.max(np.abs(Hx)), np.max(np.abs(fs)), np.max(np.abs(Gty)))
        score = max(rp / p_scale, rd / d_scale)
        if score < best_score:
            best_score = score
            best = (x.copy(), y.copy(), rp, rd)
        if rp <= tol * p_scale and rd <= tol * d_scale:
            u = d_scl * x
            yo = e_scl * y
            rp_o, rd_o = _kkt_error(H, f, G, lo, hi, u, yo)
            cand = _polish(H, f, G, lo, hi, u, yo, equality)
            if cand is not None:
                rp_c, rd_c = _kkt_error(H, f, G, lo, hi, cand[0], cand[1])
                if rp_c <= max(rp_o, feas_floor) and max(rp_c, rd_c) <= max(rp_o, rd_o) + 1e-12:
                    u, yo = cand[0], cand[1]
                    rp_o, rd_o = rp_c, rd_c
            return QpSolution(
                u=u,
                objective=float(0.5 * u @ H @ u + f @ u + qp.const),
                iterations=k,
                primal_residual=rp_o,
                dual_residual=rd_o,
                duals=yo,
            )
        if k == next_attempt and k < max_iter:
            next_attempt *= 2
            found = finish_exact(k)
            if found is not None:
                return found
        if k % 25 == 0:
            ratio = np.sqrt((rp / p_scale) / max(rd / d_scale, 1e-16))
            new_rho = float(np.clip(rho * ratio, 1e-6, 1e6))
            if new_rho > 5.0 * rho or new_rho < rho / 5.0:
                rho = new_rho
                rho_vec = rho * np.where(equality, 1e3, 1.0)
                fac = factorize(rho_vec)

    xb, yb, rp, rd = best
    ub = d_scl * xb
    yo = e_scl * yb
    rp_o, rd_o = _kkt_error(H, f, G, lo, hi, ub, yo)
    cand = _polish(H, f, G, lo, hi, ub, yo, equality)
    if cand is not None:
        rp_c, rd_c = _kkt_error(H, f, G, lo, hi, cand[0], cand[1])
        if rp_c <= max(rp_o, feas_floor) and max(rp_c, rd_c) <= max(rp_o, rd_o) + 1e-12:
            ub, yo = cand[0], cand[1]
            rp_o, rd_o = rp_c, rd_c
    raise MaxIterations(
        QpSolution(
            u=ub,
            objective=float(0.5 * ub @ H @ ub + f @ ub + qp.const),
            iterations=iterations,
            primal_residual=rp_o,
            dual_residual=rd_o,
            duals=yo,
        )
    )


def _prediction_matrices(A: np.ndarray, B: np.ndarray, C: np.ndarray, horizon: int):
    """Free-response map M and input-to-output map S for stacked outputs
    X = [C z_1; ...; C z_Np] = M z0 + S [u_1; ...; u_Np]."""
    d, n = C.shape
    m = B.shape[1]
    M = np.empty((horizon * d, n))
    impulse = [C @ B]  # impulse[j] = C A^j B
    P = C.copy()
    for p in range(horizon):
        P = P @ A
        M[p * d : (p + 1) * d] = P
        impulse.append(P @ B)
    S = np.zeros((horizon * d, horizon * m))
    for p in range(horizon):
        for i in range(p + 1):
            S[p * d : (p + 1) * d, i * m : (i + 1) * m] = impulse[p - i]
    return M, S


def _blockdiag_apply(W: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    """Apply blockdiag(W, ..., W) to a stacked vector or matrix."""
    d = W.shape[0]
    blocks = stacked.reshape(-1, d, *stacked.shape[1:])
    return np.einsum("ij,kj...->ki...", W, blocks).reshape(stacked.shape)


def _cost_matrices(S: np.ndarray, Q: np.ndarray, R: np.ndarray, horizon: int, terminal_weight: float = 1.0):
    QS = _blockdiag_apply(Q, S)
    QS[-Q.shape[0] :] *= terminal_weight
    H = 2.0 * (S.T @ QS + np.kron(np.eye(horizon), R))
    return QS, 0.5 * (H + H.T)


def _assemble_qp(H, QS, M, S, cfg: MpcConfig, z0, taubar) -> QpProblem:
    horizon = cfg.horizon
    m = cfg.R.shape[0]
    r = M @ z0 - taubar
    f = 2.0 * (QS.T @ r)
    Qr = _blockdiag_apply(cfg.Q, r)
    Qr[-cfg.Q.shape[0] :] *= cfg.terminal_weight
    const = float(r @ Qr)
    G = np.vstack([np.eye(horizon * m), S])
    lo = np.concatenate([np.tile(cfg.u_min, horizon), np.tile(cfg.x_min, horizon) - M @ z0])
    hi = np.concatenate([np.tile(cfg.u_max, horizon), np.tile(cfg.x_max, horizon) - M @ z0])
    return QpProblem(H=H, f=f, G=G, lo=lo, hi=hi, const=const)


def condense(model: LiftedLinearModel, cfg: MpcConfig, z0: np.ndarray, tau: np.ndarray) -> QpProblem:
    """Eliminate the lifted state and return the control-only QP.

    ``tau`` holds the reference outputs for steps 1..horizon, one row per
    step. The QP has ``m * horizon`` variables regardless of the lifting
    dimension; its ``const`` term completes the tracking objective value.
    """
    if model.dt is None:
        raise ValueError("condense needs a discrete-time model")
    if abs(model.dt - cfg.dt) > 1e-12:
        raise ValueError(f"model dt {model.dt} does not match config dt {cfg.dt}")
    tau = np.asarray(tau, dtype=float)
    d = model.state_dim
    if tau.shape != (cfg.horizon, d):
        raise ValueError(f"reference shape {tau.shape}, expected {(cfg.horizon, d)}")
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (model.lifted_dim,):
        raise ValueError(f"z0 shape {z0.shape}, expected {(model.lifted_dim,)}")
    M, S = _prediction_matrices(model.A, model.B, model.C, cfg.horizon)
    QS, H = _cost_matrices(S, cfg.Q, cfg.R, cfg.horizon, cfg.terminal_weight)
    return _assemble_qp(H, QS, M, S, cfg, z0, tau.reshape(-1))


def sparse_qp(model: LiftedLinearModel, cfg: MpcConfig, z0: np.ndarray, tau: np.ndarray) -> QpProblem:
    """Reference formulation keeping states as variables.

    Variables stack as [u_1..u_Np, z_1..z_Np]; the dynamics enter as
    equality rows (lo == hi). Exists to cross-check :func:`condense` — same
    objective, same solver, wildly different variable count.
    """
    if model.dt is None:
        raise ValueError("sparse_qp needs a discrete-time model")
    tau = np.asarray(tau, dtype=float)
    horizon = cfg.horizon
    n = model.lifted_dim
    d = model.state_dim
    m = model.input_dim
    nu = horizon * m
    nz = horizon * n
    CtQC = model.C.T @ cfg.Q @ model.C
    H = np.zeros((nu + nz, nu + nz))
    H[:nu, :nu] = 2.0 * np.kron(np.eye(horizon), cfg.R)
    H[nu:, nu:] = 2.0 * np.kron(np.eye(horizon), CtQC)
    H[nu + (horizon - 1) * n :, nu + (horizon - 1) * n :] = 2.0 * cfg.terminal_weight * CtQC
    f = np.zeros(nu + nz)
    weights = [1.0] * (horizon - 1) + [cfg.terminal_weight]
    for p in range(horizon):
        f[nu + p * n : nu + (p + 1) * n] = -2.0 * weights[p] * model.C.T @ (cfg.Q @ tau[p])
    const = float(sum(weights[p] * (tau[p] @ cfg.Q @ tau[p]) for p in range(horizon)))

    # dynamics: z_1 - B u_1 = A z0 ; z_p - A z_{p-1} - B u_p = 0
    Geq = np.zeros((nz, nu + nz))
    beq = np.zeros(nz)
    for p in range(horizon):
        rows = slice(p * n, (p + 1) * n)
        Geq[rows, nu + p * n : nu + (p + 1) * n] = np.eye(n)
        Geq[rows, p * m : (p + 1) * m] = -model.B
        if p == 0:
            beq[rows] = model.A @ np.asarray(z0, dtype=float)
        else:
            Geq[rows, nu + (p - 1) * n : nu + p * n] = -model.A
    Gu = np.hstack([np.eye(nu), np.zeros((nu, nz))])
    Gx = np.hstack([np.zeros((horizon * d, nu)), np.kron(np.eye(horizon), model.C)])
    G = np.vstack([Gu, Geq, Gx])
    lo = np.concatenate([np.tile(cfg.u_min, horizon), beq, np.tile(cfg.x_min, horizon)])
    hi = np.concatenate([np.tile(cfg.u_max, horizon), beq, np.tile(cfg.x_max, horizon)])
    return QpProblem(H=0.5 * (H + H.T), f=f, G=G, lo=lo, hi=hi, const=const)


@dataclass
class MpcStepInfo:
    objective: float
    iterations: int
    flagged: bool
    stage_cost: float
    primal_residual: float
    dual_residual: float


class MpcController:
    """Receding-horizon tracking controller on a discrete lifted model.

    The quadratic term, prediction maps, and constraint matrix depend only
    on the model and config, so they are built once; each step refreshes the
    linear term and output bounds, solves warm-started, and returns the
    first move clamped to the input box.
    """

    def __init__(
        self,
        model: LiftedLinearModel,
        cfg: MpcConfig,
        reference: np.ndarray,
        solver_tol: float = 1e-6,
        solver_max_iter: int = 4000,
    ):
        if model.dt is None:
            raise ValueError("controller needs a discrete-time model")
        if abs(model.dt - cfg.dt) > 1e-12:
            raise ValueError(f"model dt {model.dt} does not match config dt {cfg.dt}")
        reference = np.atleast_2d(np.asarray(reference, dtype=float))
        if reference.shape[1] != model.state_dim:
            raise ValueError("reference and model disagree on state dimension")
        self.model = model
        self.cfg = cfg
        self.reference = reference
        self.solver_tol = solver_tol
        self.solver_max_iter = solver_max_iter
        self._m = model.input_dim
        self._d = model.state_dim
        self._M, self._S = _prediction_matrices(model.A, model.B, model.C, cfg.horizon)
        self._QS, self._H = _cost_matrices(self._S, cfg.Q, cfg.R, cfg.horizon, cfg.terminal_weight)
        self._warm_x = None
        self._warm_y = None

    def _window(self, k: int) -> np.ndarray:
        idx = np.minimum(np.arange(k + 1, k + 1 + self.cfg.horizon), self.reference.shape[0] - 1)
        return self.reference[idx]

    def step(self, x: np.ndarray, k: int):
        """Solve the horizon problem at sample k and return (u_k, info)."""
        x = np.asarray(x, dtype=float)
        z0 = self.model.lift(x)
        taubar = self._window(k).reshape(-1)
        qp = _assemble_qp(self._H, self._QS, self._M, self._S, self.cfg, z0, taubar)
        flagged = False
        try:
            sol = solve_qp(
                qp, self.solver_tol, self.solver_max_iter, x0=self._warm_x, y0=self._warm_y
            )
        except MaxIterations as err:
            sol = err.solution
            flagged = True
        m = self._m
        self._warm_x = np.concatenate([sol.u[m:], sol.u[-m:]])
        self._warm_y = self._shift_duals(sol.duals)
        u = np.clip(sol.u[:m], self.cfg.u_min, self.cfg.u_max)
        tau_k = self.reference[min(k, self.reference.shape[0] - 1)]
        err_k = x - tau_k
        stage = float(err_k @ self.cfg.Q @ err_k + u @ self.cfg.R @ u)
        info = MpcStepInfo(
            objective=sol.objective,
            iterations=sol.iterations,
            flagged=flagged,
            stage_cost=stage,
            primal_residual=sol.primal_residual,
            dual_residual=sol.dual_residual,
        )
        return u, info

    def _shift_duals(self, y: np.ndarray) -> np.ndarray:
        nu = self.cfg.horizon * self._m
        yu = np.concatenate([y[self._m : nu], y[nu - self._m : nu]])
        yx = np.concatenate([y[nu + self._d :], y[-self._d :]])
        return np.concatenate([yu, yx])

    def reset(self) -> None:
        """Drop the warm start (fresh task)."""
        self._warm_x = None
        self._warm_y = None


def generate_reference(
    model: LiftedLinearModel,
    x0: np.ndarray,
    duration: float,
    cfg: MpcConfig,
    solver_tol: float = 1e-6,
    solver_max_iter: int = 4000,
) -> np.ndarray:
    """Plan a path from x0 to the origin with one full-horizon problem.

    Returns ``round(duration / dt)`` samples starting at x0: the initial
    state followed by the predicted optimal outputs. Built on the same
    condensed machinery as the controller.
    """
    n = duration / cfg.dt
    if abs(n - round(n)) > 1e-9 or round(n) < 2:
        raise ValueError("duration must cover at least two samples")
    n = int(round(n))
    x0 = np.asarray(x0, dtype=float)
    plan_cfg = replace(cfg, horizon=n - 1)
    z0 = model.lift(x0)
    M, S = _prediction_matrices(model.A, model.B, model.C, plan_cfg.horizon)
    QS, H = _cost_matrices(S, plan_cfg.Q, plan_cfg.R, plan_cfg.horizon, plan_cfg.terminal_weight)
    qp = _assemble_qp(H, QS, M, S, plan_cfg, z0, np.zeros(plan_cfg.horizon * model.state_dim))
    sol = solve_qp(qp, solver_tol, solver_max_iter)
    predicted = (M @ z0 + S @ sol.u).reshape(plan_cfg.horizon, model.state_dim)
    return np.vstack([x0[None, :], predicted])
