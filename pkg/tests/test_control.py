"""Pole placement, the QP solver, condensed MPC, and reference planning."""

import numpy as np
import pytest

from kooplift.control import (
    Infeasible,
    MaxIterations,
    MpcConfig,
    MpcController,
    QpProblem,
    Uncontrollable,
    condense,
    generate_reference,
    load_qp,
    place_poles,
    save_qp,
    solve_qp,
    sparse_qp,
)
from kooplift.edmd import LiftedLinearModel, discretize, nominal_model
from kooplift.sim import CartPoleParams, cartpole_linearization

# same reference gain as in the simulator tests: scipy.signal.place_poles on
# the analytic cart pole linearization at poles (-1.5, -2.5, -3.5, -4.5);
# a single-input gain hitting those poles is unique, so Ackermann must agree
K_CART = np.array([[3.0103211009175395, -38.04616055045921, 4.740061162079638, -8.370030581039865]])


def _double_integrator(dt: float) -> LiftedLinearModel:
    # exact zero-order-hold discretization of xddot = u
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])
    return LiftedLinearModel(A=A, B=B, C=np.eye(2), kind="nominal", dt=dt)


def _box_cfg(horizon: int, dt: float, **overrides) -> MpcConfig:
    base = dict(
        horizon=horizon,
        Q=np.eye(2),
        R=np.array([[0.1]]),
        x_min=np.array([-10.0, -10.0]),
        x_max=np.array([10.0, 10.0]),
        u_min=np.array([-5.0]),
        u_max=np.array([5.0]),
        dt=dt,
    )
    base.update(overrides)
    return MpcConfig(**base)


# ---------------------------------------------------------------------------
# pole placement
# ---------------------------------------------------------------------------


def test_place_poles_scalar():
    fb = place_poles(np.array([[0.0]]), np.array([[1.0]]), (-2.0,))
    assert fb.K == pytest.approx(np.array([[-2.0]]), abs=1e-12)
    assert fb.poles == (-2.0,)


def test_place_poles_double_integrator():
    # closed loop [[0, 1], [k1, k2]] has polynomial s^2 - k2 s - k1, so
    # matching (s + 2)(s + 3) forces K = [-6, -5] exactly
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    fb = place_poles(A, B, (-2.0, -3.0))
    assert np.max(np.abs(fb.K - np.array([[-6.0, -5.0]]))) <= 1e-12


def test_place_poles_matches_reference_gain():
    A, B = cartpole_linearization(CartPoleParams())
    fb = place_poles(A, B, (-1.5, -2.5, -3.5, -4.5))
    assert np.max(np.abs(fb.K - K_CART)) <= 1e-6
    closed = np.sort(np.linalg.eigvals(A + B @ fb.K).real)
    assert np.allclose(closed, [-4.5, -3.5, -2.5, -1.5], atol=1e-9)


def test_place_poles_rejects_uncontrollable_pair():
    with pytest.raises(Uncontrollable):
        place_poles(np.diag([-1.0, -2.0]), np.array([[0.0], [0.0]]), (-2.0, -3.0))


def test_place_poles_input_validation():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        place_poles(A, B, (-2.0,))
    with pytest.raises(ValueError):
        place_poles(A, B, (-2.0, -2.0))
    with pytest.raises(ValueError):
        place_poles(A, B, (-2.0, 1.0))


# ---------------------------------------------------------------------------
# QP solver
# ---------------------------------------------------------------------------


def test_solver_active_bound():
    # min u^2 subject to u >= 1; stationarity 2u + y = 0 gives dual -2
    qp = QpProblem(
        H=np.array([[2.0]]),
        f=np.zeros(1),
        G=np.array([[1.0]]),
        lo=np.array([1.0]),
        hi=np.array([np.inf]),
    )
    sol = solve_qp(qp)
    assert sol.u[0] == pytest.approx(1.0, abs=1e-5)
    assert sol.duals[0] == pytest.approx(-2.0, abs=1e-3)
    assert sol.objective == pytest.approx(1.0, abs=1e-4)


def test_solver_unconstrained_direct_path():
    qp = QpProblem(
        H=2.0 * np.eye(2),
        f=np.array([-2.0, -4.0]),
        G=np.zeros((0, 2)),
        lo=np.zeros(0),
        hi=np.zeros(0),
    )
    sol = solve_qp(qp)
    assert sol.iterations == 0
    assert np.allclose(sol.u, [1.0, 2.0], atol=1e-12)
    assert sol.objective == pytest.approx(-5.0, abs=1e-12)


def test_solver_inactive_box_matches_unconstrained():
    qp = QpProblem(
        H=2.0 * np.eye(2),
        f=np.array([-2.0, -4.0]),
        G=np.eye(2),
        lo=-10.0 * np.ones(2),
        hi=10.0 * np.ones(2),
    )
    sol = solve_qp(qp)
    assert sol.iterations > 0
    assert np.allclose(sol.u, [1.0, 2.0], atol=1e-5)


def test_solver_equality_row():
    # min |u|^2 on the line u1 + u2 = 1 projects the origin to (0.5, 0.5)
    qp = QpProblem(
        H=2.0 * np.eye(2),
        f=np.zeros(2),
        G=np.array([[1.0, 1.0]]),
        lo=np.array([1.0]),
        hi=np.array([1.0]),
    )
    sol = solve_qp(qp)
    assert np.allclose(sol.u, [0.5, 0.5], atol=1e-6)


def test_solver_satisfies_optimality_conditions():
    rng = np.random.default_rng(11)
    tol = 1e-8
    for _ in range(8):
        nv = int(rng.integers(2, 7))
        nc = int(rng.integers(1, nv + 2))
        Mh = rng.normal(size=(nv, nv))
        H = Mh @ Mh.T + np.eye(nv)
        f = rng.normal(size=nv)
        G = rng.normal(size=(nc, nv))
        anchor = rng.normal(size=nv)
        slack = np.abs(rng.normal(size=nc)) + 0.1
        lo = G @ anchor - slack
        hi = G @ anchor + slack
        if nc >= 2:
            lo[0] = -np.inf
            hi[-1] = np.inf
        sol = solve_qp(QpProblem(H=H, f=f, G=G, lo=lo, hi=hi), tol=tol, max_iter=20_000)
        grad = H @ sol.u + f + G.T @ sol.duals
        d_scale = 1.0 + max(
            np.max(np.abs(H @ sol.u)), np.max(np.abs(f)), np.max(np.abs(G.T @ sol.duals))
        )
        assert np.max(np.abs(grad)) <= 10 * tol * d_scale
        Gu = G @ sol.u
        p_scale = 1.0 + np.max(np.abs(Gu))
        assert np.all(Gu >= lo - 10 * tol * p_scale)
        assert np.all(Gu <= hi + 10 * tol * p_scale)


def test_solver_rejects_crossed_bounds():
    qp = QpProblem(
        H=np.eye(1), f=np.zeros(1), G=np.eye(1), lo=np.array([2.0]), hi=np.array([1.0])
    )
    with pytest.raises(Infeasible):
        solve_qp(qp)


def test_solver_iteration_cap_carries_best_iterate():
    rng = np.random.default_rng(5)
    Mh = rng.normal(size=(5, 5))
    qp = QpProblem(
        H=Mh @ Mh.T + 0.1 * np.eye(5),
        f=rng.normal(size=5),
        G=np.eye(5),
        lo=-0.1 * np.ones(5),
        hi=0.1 * np.ones(5),
    )
    with pytest.raises(MaxIterations) as excinfo:
        solve_qp(qp, max_iter=2)
    sol = excinfo.value.solution
    assert sol.iterations == 2
    assert sol.u.shape == (5,)
    assert np.isfinite(sol.objective)
    assert np.isfinite(sol.primal_residual) and np.isfinite(sol.dual_residual)


def test_solver_warm_start_resumes_at_optimum():
    rng = np.random.default_rng(9)
    Mh = rng.normal(size=(4, 4))
    qp = QpProblem(
        H=Mh @ Mh.T + np.eye(4),
        f=rng.normal(size=4),
        G=np.eye(4),
        lo=-np.ones(4),
        hi=np.ones(4),
    )
    cold = solve_qp(qp)
    warm = solve_qp(qp, x0=cold.u, y0=cold.duals)
    assert warm.iterations <= cold.iterations
    assert warm.iterations <= 5
    assert np.allclose(warm.u, cold.u, atol=1e-5)


def test_qp_json_roundtrip(tmp_path):
    qp = QpProblem(
        H=2.0 * np.eye(2),
        f=np.array([1.0, -0.5]),
        G=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        lo=np.array([-np.inf, 0.0, -1.0]),
        hi=np.array([2.0, np.inf, 1.0]),
        const=0.25,
    )
    path = tmp_path / "qp.json"
    save_qp(path, qp)
    back = load_qp(path)
    assert np.array_equal(back.H, qp.H)
    assert np.array_equal(back.f, qp.f)
    assert np.array_equal(back.G, qp.G)
    assert np.array_equal(back.lo, qp.lo)
    assert np.array_equal(back.hi, qp.hi)
    assert back.const == qp.const


# ---------------------------------------------------------------------------
# condensing
# ---------------------------------------------------------------------------


def test_condense_scalar_frozen_example():
    # one step of x+ = x + u from x0 = 1 toward 0 with unit weights:
    # cost (1 + u)^2 + u^2, so H = 4, f = 2, const = 1, minimum 1/2 at -1/2
    model = LiftedLinearModel(A=np.eye(1), B=np.eye(1), C=np.eye(1), kind="nominal", dt=1.0)
    cfg = MpcConfig(
        horizon=1,
        Q=np.array([[1.0]]),
        R=np.array([[1.0]]),
        x_min=np.array([-np.inf]),
        x_max=np.array([np.inf]),
        u_min=np.array([-np.inf]),
        u_max=np.array([np.inf]),
        dt=1.0,
    )
    qp = condense(model, cfg, np.array([1.0]), np.array([[0.0]]))
    assert np.array_equal(qp.H, [[4.0]])
    assert np.array_equal(qp.f, [2.0])
    assert qp.const == 1.0
    sol = solve_qp(qp)
    assert sol.u[0] == pytest.approx(-0.5, abs=1e-6)
    assert sol.objective == pytest.approx(0.5, abs=1e-5)


def test_condense_validates_inputs():
    model = _double_integrator(0.1)
    cfg = _box_cfg(3, 0.1)
    with pytest.raises(ValueError):
        condense(model, cfg, np.zeros(2), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        condense(model, cfg, np.zeros(3), np.zeros((3, 2)))
    cont = nominal_model(np.zeros((2, 2)), np.array([[0.0], [1.0]]))
    with pytest.raises(ValueError):
        condense(cont, cfg, np.zeros(2), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        condense(_double_integrator(0.05), cfg, np.zeros(2), np.zeros((3, 2)))


def test_problem_size_independent_of_lifting():
    # the condensed program has horizon * n_inputs variables no matter how
    # many functions the lifting appends
    rng = np.random.default_rng(3)
    horizon = 12
    for extra in (0, 10, 80):
        n = 4 + extra
        model = LiftedLinearModel(
            A=0.01 * rng.normal(size=(n, n)),
            B=rng.normal(size=(n, 1)),
            C=np.hstack([np.eye(4), np.zeros((4, extra))]),
            kind="nominal",
            dt=0.1,
        )
        cfg = MpcConfig(
            horizon=horizon,
            Q=np.eye(4),
            R=np.array([[1.0]]),
            x_min=-5.0 * np.ones(4),
            x_max=5.0 * np.ones(4),
            u_min=np.array([-1.0]),
            u_max=np.array([1.0]),
            dt=0.1,
        )
        qp = condense(model, cfg, np.zeros(n), np.zeros((horizon, 4)))
        assert qp.f.size == horizon * 1
        assert qp.G.shape[1] == horizon * 1


def _random_instance(rng, horizon, tight_u, beta):
    n = int(rng.integers(2, 4))
    m = int(rng.integers(1, 3))
    d = n if rng.random() < 0.5 else n - 1
    d = max(d, 1)
    A = rng.normal(size=(n, n))
    A *= 0.9 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-6)
    B = rng.normal(size=(n, m))
    Mq = rng.normal(size=(d, d))
    Mr = rng.normal(size=(m, m))
    u0 = 0.2 if tight_u else 5.0
    cfg = MpcConfig(
        horizon=horizon,
        Q=Mq @ Mq.T / d + 0.1 * np.eye(d),
        R=Mr @ Mr.T / m + 0.1 * np.eye(m),
        x_min=-10.0 * np.ones(d),
        x_max=10.0 * np.ones(d),
        u_min=-u0 * np.ones(m),
        u_max=u0 * np.ones(m),
        dt=0.1,
        terminal_weight=beta,
    )
    model = LiftedLinearModel(A=A, B=B, C=np.eye(n)[:d], kind="nominal", dt=0.1)
    z0 = 0.5 * rng.normal(size=n)
    tau = 0.3 * rng.normal(size=(horizon, d))
    return model, cfg, z0, tau


def test_condensed_matches_state_variable_form():
    # eliminating the state must not change the optimum: same objective
    # (constant included) and same first move as the formulation that keeps
    # states as variables with dynamics as equality rows
    rng = np.random.default_rng(7)
    for trial in range(10):
        horizon = int(rng.integers(2, 6))
        beta = 1.0 if trial % 2 == 0 else 7.0
        model, cfg, z0, tau = _random_instance(rng, horizon, trial % 3 == 0, beta)
        dense = condense(model, cfg, z0, tau)
        wide = sparse_qp(model, cfg, z0, tau)
        m = model.input_dim
        assert dense.f.size == m * horizon
        assert wide.f.size == (m + model.lifted_dim) * horizon
        sd = solve_qp(dense, tol=1e-8, max_iter=20_000)
        sw = solve_qp(wide, tol=1e-8, max_iter=20_000)
        assert sw.objective == pytest.approx(sd.objective, abs=1e-5 * (1 + abs(sd.objective)))
        assert np.max(np.abs(sw.u[:m] - sd.u[:m])) <= 1e-4


# ---------------------------------------------------------------------------
# receding-horizon controller
# ---------------------------------------------------------------------------


def test_controller_zero_state_zero_reference_gives_zero_input():
    ctrl = MpcController(_double_integrator(0.1), _box_cfg(10, 0.1), np.zeros((20, 2)))
    u, info = ctrl.step(np.zeros(2), 0)
    assert np.max(np.abs(u)) <= 1e-9
    assert not info.flagged
    assert info.stage_cost == 0.0


def test_controller_regulates_double_integrator():
    dt = 0.1
    model = _double_integrator(dt)
    ctrl = MpcController(model, _box_cfg(20, dt), np.zeros((120, 2)))
    x = np.array([1.0, 0.0])
    for k in range(100):
        u, info = ctrl.step(x, k)
        assert not info.flagged
        x = model.A @ x + model.B @ u
    assert np.linalg.norm(x) <= 1e-3


def test_controller_first_move_matches_state_variable_form():
    dt = 0.1
    model = _double_integrator(dt)
    cfg = _box_cfg(8, dt)
    reference = np.tile(np.array([0.5, 0.0]), (30, 1))
    ctrl = MpcController(model, cfg, reference, solver_tol=1e-8, solver_max_iter=20_000)
    x0 = np.array([-1.0, 0.2])
    u, info = ctrl.step(x0, 0)
    oracle = solve_qp(
        sparse_qp(model, cfg, model.lift(x0), reference[1:9]), tol=1e-8, max_iter=20_000
    )
    assert u[0] == pytest.approx(oracle.u[0], abs=1e-4)
    assert not info.flagged


def test_controller_flags_unconverged_solves():
    ctrl = MpcController(_double_integrator(0.1), _box_cfg(10, 0.1), np.zeros((20, 2)), solver_max_iter=2)
    u, info = ctrl.step(np.array([5.0, -3.0]), 0)
    assert info.flagged
    assert info.iterations == 2
    assert -5.0 <= u[0] <= 5.0


def test_controller_reports_stage_cost():
    cfg = _box_cfg(6, 0.1, Q=np.diag([2.0, 1.0]), R=np.array([[0.5]]))
    reference = np.tile(np.array([0.3, -0.1]), (15, 1))
    ctrl = MpcController(_double_integrator(0.1), cfg, reference)
    x = np.array([1.0, -0.5])
    u, info = ctrl.step(x, 2)
    err = x - reference[2]
    assert info.stage_cost == pytest.approx(err @ cfg.Q @ err + u @ cfg.R @ u, rel=1e-12)


def test_controller_window_holds_last_row():
    reference = np.arange(10, dtype=float).reshape(5, 2)
    ctrl = MpcController(_double_integrator(0.1), _box_cfg(4, 0.1), reference)
    assert np.array_equal(ctrl._window(0), reference[[1, 2, 3, 4]])
    assert np.array_equal(ctrl._window(3), reference[[4, 4, 4, 4]])
    assert np.array_equal(ctrl._window(99), reference[[4, 4, 4, 4]])


def test_controller_validates_model_and_reference():
    cfg = _box_cfg(5, 0.1)
    with pytest.raises(ValueError):
        MpcController(nominal_model(np.zeros((2, 2)), np.array([[0.0], [1.0]])), cfg, np.zeros((5, 2)))
    with pytest.raises(ValueError):
        MpcController(_double_integrator(0.05), cfg, np.zeros((5, 2)))
    with pytest.raises(ValueError):
        MpcController(_double_integrator(0.1), cfg, np.zeros((5, 3)))


# ---------------------------------------------------------------------------
# reference planning
# ---------------------------------------------------------------------------


def test_reference_from_origin_is_identically_zero():
    model = _double_integrator(0.1)
    ref = generate_reference(model, np.zeros(2), 1.0, _box_cfg(5, 0.1))
    assert ref.shape == (10, 2)
    assert np.array_equal(ref, np.zeros((10, 2)))


def test_reference_duration_must_align_with_dt():
    model = _double_integrator(0.1)
    cfg = _box_cfg(5, 0.1)
    with pytest.raises(ValueError):
        generate_reference(model, np.zeros(2), 0.15, cfg)
    with pytest.raises(ValueError):
        generate_reference(model, np.zeros(2), 0.1, cfg)


def test_reference_plans_to_origin():
    model = _double_integrator(0.05)
    cfg = _box_cfg(
        10, 0.05, R=np.array([[0.01]]), u_min=np.array([-10.0]), u_max=np.array([10.0]),
        terminal_weight=1000.0,
    )
    ref = generate_reference(model, np.array([1.0, 0.0]), 3.0, cfg)
    assert ref.shape == (60, 2)
    assert np.array_equal(ref[0], [1.0, 0.0])
    assert np.linalg.norm(ref[-1]) <= 1e-2


def test_reference_reaches_cartpole_target_zone():
    A, B = cartpole_linearization(CartPoleParams())
    model = discretize(nominal_model(A, B), 0.01)
    cfg = MpcConfig(
        horizon=200,
        Q=np.diag([1.0, 1.0, 0.1, 0.1]),
        R=np.array([[0.001]]),
        x_min=np.array([-10.0, -1.5, -10.0, -10.0]),
        x_max=np.array([10.0, 1.5, 10.0, 10.0]),
        u_min=np.array([-15.0]),
        u_max=np.array([15.0]),
        dt=0.01,
        terminal_weight=1000.0,
    )
    x0 = np.array([2.5, 0.25, 0.05, 0.05])
    ref = generate_reference(model, x0, 2.0, cfg)
    assert ref.shape == (200, 4)
    assert np.array_equal(ref[0], x0)
    assert np.linalg.norm(ref[-1]) <= 0.1
    assert np.all(ref >= cfg.x_min - 1e-6)
    assert np.all(ref <= cfg.x_max + 1e-6)


def test_mpc_config_validation():
    good = dict(
        horizon=3,
        Q=np.eye(2),
        R=np.eye(1),
        x_min=-np.ones(2),
        x_max=np.ones(2),
        u_min=np.array([-1.0]),
        u_max=np.array([1.0]),
        dt=0.1,
    )
    MpcConfig(**good)
    with pytest.raises(ValueError):
        MpcConfig(**{**good, "horizon": 0})
    with pytest.raises(ValueError):
        MpcConfig(**{**good, "dt": 0.0})
    with pytest.raises(ValueError):
        MpcConfig(**{**good, "Q": np.array([[1.0, 2.0], [0.0, 1.0]])})
    with pytest.raises(ValueError):
        MpcConfig(**{**good, "Q": -np.eye(2)})
    with pytest.raises(ValueError):
        MpcConfig(**{**good, "x_min": np.array([2.0, 0.0])})
    with pytest.raises(ValueError):
        MpcConfig(**{**good, "terminal_weight": -1.0})
