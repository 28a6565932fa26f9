from __future__ import annotations

import math

import numpy as np
import pytest

from combsim.errors import BoundViolated, InfeasibleWindow, NoConvergence, WindowInfeasible
from combsim.evolution import propagate
from combsim.grid import GridFunction, GridSpec, l2_array
from combsim.reaction import ReactionContext
from combsim.solver import (
    ContractionParams,
    SolverConfig,
    build_steppers,
    compute_window,
    global_solve,
    mol_solve,
    picard_solve,
    picard_sweep,
)
from tests.test_model import make_fuel, make_layer

GRID = GridSpec(-10.0, 10.0, 801)
CFG = SolverConfig(dt=1e-3, theta=0.5, tol=1e-8, max_iter=50, horizon=1.0)


def zero_source_ctx(grid=GRID, nu=1.0):
    layers = tuple(
        make_layer(grid, a=1.0, b=0.0, c=0.0, d=0.0, lam=nu, K=0.0) for _ in range(2)
    )
    fuel = make_fuel(grid, [{"type": "const", "value": 0.5}] * 2)
    return ReactionContext(layers, fuel, grid, 1.0)


def convected_ctx(grid=GRID, nu=0.5, c=0.3):
    # constant alpha = nu, beta = c, and an identically zero combustion source
    layers = tuple(
        make_layer(grid, a=1.0, b=0.0, c=c, d=0.0, lam=nu, K=0.0) for _ in range(2)
    )
    fuel = make_fuel(grid, [{"type": "const", "value": 0.5}] * 2)
    return ReactionContext(layers, fuel, grid, 1.0)


def gaussian_phi(grid=GRID, amps=(1.0, 0.8)):
    x = grid.nodes()
    return [GridFunction(grid, a * np.exp(-(x**2) / 2.0)) for a in amps]


def manual_window(T_prime, *, rho=1.0, M=2.0, R=10.0, T=1.0, beta=0.0,
                  beta_tilde=0.0, mu=1.0, kappa=0.0):
    return ContractionParams(
        rho=rho, M=M, R=R, T=T, T_prime=T_prime, beta=beta, beta_tilde=beta_tilde,
        mu=mu, kappa=kappa, terms={"manual": T_prime},
        contraction_bound=T_prime * kappa * math.exp(beta * T),
    )


class TestComputeWindow:
    def test_pinned_regression(self):
        # mu=1, kappa=1, beta=beta_tilde=0.1, rho=1, M=2, R=8, T=1:
        # min{1, 2/e^0.1, 1/e^0.1, 8/e^0.1 - 1} = e^{-0.1}, so T' = 0.9 e^{-0.1}
        w = compute_window(beta=0.1, beta_tilde=0.1, mu=1.0, kappa=1.0, rho=1.0,
                           M=2.0, R=8.0, T=1.0)
        assert w.T_prime == pytest.approx(0.9 * math.exp(-0.1), rel=1e-12)
        assert w.terms["1/(kappa*exp(beta*T))"] == pytest.approx(math.exp(-0.1), rel=1e-12)
        assert w.contraction_bound == pytest.approx(0.9, rel=1e-12)

    def test_zero_source_convention(self):
        # mu = kappa = 0: every denominator term counts as +inf, T' = 0.9 T
        w = compute_window(beta=0.2, beta_tilde=0.0, mu=0.0, kappa=0.0, rho=1.0, M=2.0)
        assert w.T == pytest.approx(math.log(2.0) / 0.2)
        assert w.T_prime == pytest.approx(0.9 * w.T)
        assert w.contraction_bound == 0.0

    def test_zero_beta_uses_default_horizon(self):
        w = compute_window(beta=0.0, beta_tilde=0.0, mu=0.0, kappa=0.0, rho=1.0,
                           default_T=1.0)
        assert w.T == 1.0
        assert w.T_prime == pytest.approx(0.9)

    def test_infeasible_cases(self):
        with pytest.raises(InfeasibleWindow):
            compute_window(beta=0.1, beta_tilde=0.0, mu=1.0, kappa=1.0, rho=1.0, M=0.5)
        with pytest.raises(InfeasibleWindow):
            compute_window(beta=0.1, beta_tilde=0.0, mu=1.0, kappa=1.0, rho=0.0)
        with pytest.raises(InfeasibleWindow):
            # T above the norm-growth cap ln(M/rho)/beta
            compute_window(beta=1.0, beta_tilde=0.0, mu=1.0, kappa=1.0, rho=1.0,
                           M=2.0, T=5.0)
        with pytest.raises(InfeasibleWindow):
            # R below the admissible radius
            compute_window(beta=0.1, beta_tilde=0.2, mu=1.0, kappa=1.0, rho=1.0,
                           M=2.0, R=1.0)

    def test_window_shorter_than_step_rejected(self):
        ctx = zero_source_ctx()
        w = manual_window(5e-4)
        with pytest.raises(InfeasibleWindow):
            picard_solve(ctx, gaussian_phi(), w, CFG)


class TestPicard:
    def test_zero_source_one_iteration(self):
        ctx = zero_source_ctx()
        phi = gaussian_phi()
        res = picard_solve(ctx, phi, manual_window(0.05), CFG)
        assert res.iterations == 1
        assert res.converged
        assert res.final_defect == 0.0
        # trajectory equals the free evolution bitwise (same linear path)
        steppers = build_steppers(ctx, CFG.dt, CFG.theta)
        evolved = propagate(steppers[0], phi[0], 0.0, res.trajectory.times[-1])
        assert np.array_equal(res.trajectory.states[-1, 0], evolved.values)

    def test_state_independent_source_two_iterations(self):
        ctx = zero_source_ctx()
        phi = gaussian_phi()
        x = GRID.nodes()
        bump = np.exp(-((x - 1.0) ** 2))

        def forcing(t, W):
            return np.stack([bump * math.cos(t)] * 2)

        res = picard_solve(ctx, phi, manual_window(0.05), CFG, source=forcing)
        assert res.iterations <= 2
        assert res.converged
        assert res.final_defect == 0.0

    def test_arrhenius_contraction(self, arrhenius_bundle):
        b = arrhenius_bundle
        res = picard_solve(b.ctx, b.phi, b.window, b.config)
        assert res.converged
        assert res.iterations <= 15
        bound = b.window.contraction_bound
        assert bound < 1.0
        assert all(r <= bound for r in res.ratios)

    def test_fixed_point_residual(self, arrhenius_bundle):
        b = arrhenius_bundle
        res = picard_solve(b.ctx, b.phi, b.window, b.config)
        steppers = build_steppers(b.ctx, b.config.dt, b.config.theta)
        n_steps = len(res.trajectory.times) - 1
        phi_arr = np.stack([p.values for p in b.phi])
        free = np.empty_like(res.trajectory.states)
        free[0] = phi_arr
        for i in range(b.ctx.n):
            u = phi_arr[i]
            for m in range(n_steps):
                u = steppers[i].step_array(u, m)
                free[m + 1, i] = u
        once_more = picard_sweep(steppers, b.ctx.eval_arrays, free,
                                 res.trajectory.states, b.config.dt)
        diff = once_more - res.trajectory.states
        sup = max(
            l2_array(diff[m, i], b.ctx.grid.dx)
            for m in range(n_steps + 1) for i in range(b.ctx.n)
        )
        assert sup <= b.config.tol

    def test_uniqueness_under_starting_guess(self, arrhenius_bundle):
        b = arrhenius_bundle
        res_free = picard_solve(b.ctx, b.phi, b.window, b.config, initial_guess="free")
        res_frozen = picard_solve(b.ctx, b.phi, b.window, b.config, initial_guess="frozen")
        diff = res_free.trajectory.states - res_frozen.trajectory.states
        sup = max(
            l2_array(diff[m, i], b.ctx.grid.dx)
            for m in range(diff.shape[0]) for i in range(b.ctx.n)
        )
        assert sup <= 2.0 * b.config.tol

    def test_contraction_set_membership(self, arrhenius_bundle):
        b = arrhenius_bundle
        res = picard_solve(b.ctx, b.phi, b.window, b.config)
        assert res.in_contraction_set
        assert max(res.sup_h2_per_iteration) <= b.window.R * (1 + 1e-9)
        assert max(res.free_distance_per_iteration) <= b.window.M * (1 + 1e-9)

    def test_no_convergence_raised(self):
        # strongly amplifying linear source on a window far beyond contraction
        ctx = zero_source_ctx()
        phi = gaussian_phi()
        cfg = SolverConfig(dt=1e-3, tol=1e-8, max_iter=8, horizon=1.0)

        def hot(t, W):
            return 50.0 * W

        with pytest.raises(NoConvergence):
            picard_solve(ctx, phi, manual_window(0.5), cfg, source=hot)

    def test_trajectory_invariants(self, arrhenius_bundle):
        b = arrhenius_bundle
        res = picard_solve(b.ctx, b.phi, b.window, b.config)
        traj = res.trajectory
        assert np.all(np.diff(traj.times) > 0)
        assert np.array_equal(traj.states[0], np.stack([p.values for p in b.phi]))
        assert np.all(np.isfinite(traj.h2))


class TestMethodOfLines:
    def test_zero_source_matches_propagator(self):
        ctx = zero_source_ctx()
        phi = gaussian_phi()
        traj = mol_solve(ctx, phi, 0.1, CFG)
        steppers = build_steppers(ctx, CFG.dt, CFG.theta)
        for i in range(2):
            direct = propagate(steppers[i], phi[i], 0.0, 0.1)
            assert np.array_equal(traj.states[-1, i], direct.values)

    def test_manufactured_solution_second_order(self):
        nu, c = 0.5, 0.3

        def exact(x, t):
            s = x - 1.0 - 0.5 * t
            return (1.0 + 0.2 * t) * np.exp(-0.5 * s * s)

        def forcing_for(grid):
            x = grid.nodes()

            def forcing(t, W):
                s = x - 1.0 - 0.5 * t
                E = np.exp(-0.5 * s * s)
                A = 1.0 + 0.2 * t
                u_t = 0.2 * E + A * 0.5 * s * E
                u_x = -A * s * E
                u_xx = A * (s * s - 1.0) * E
                F = u_t - nu * u_xx + c * u_x
                return np.stack([F, F])

            return forcing

        errs = []
        for nx, dt in ((401, 4e-3), (801, 2e-3)):
            grid = GridSpec(-10.0, 10.0, nx)
            ctx = convected_ctx(grid, nu=nu, c=c)
            x = grid.nodes()
            phi = [GridFunction(grid, exact(x, 0.0))] * 2
            cfg = SolverConfig(dt=dt, theta=0.5)
            traj = mol_solve(ctx, phi, 0.4, cfg, source=forcing_for(grid))
            errs.append(l2_array(traj.states[-1, 0] - exact(x, 0.4), grid.dx))
        assert 3.3 <= errs[0] / errs[1] <= 4.7

    def test_decoupled_layers_evolve_independently(self):
        ctx = zero_source_ctx()
        x = GRID.nodes()
        phi_a = [GridFunction(GRID, np.exp(-(x**2) / 2)),
                 GridFunction(GRID, 0.5 * np.exp(-((x - 1) ** 2)))]
        phi_b = [phi_a[0], GridFunction(GRID, 0.1 * np.exp(-((x + 2) ** 2)))]
        ta = mol_solve(ctx, phi_a, 0.05, CFG)
        tb = mol_solve(ctx, phi_b, 0.05, CFG)
        assert np.array_equal(ta.states[:, 0, :], tb.states[:, 0, :])
        assert not np.array_equal(ta.states[:, 1, :], tb.states[:, 1, :])

    def test_oracle_equivalence_on_workhorse(self, arrhenius_bundle):
        b = arrhenius_bundle
        res = picard_solve(b.ctx, b.phi, b.window, b.config)
        horizon = float(res.trajectory.times[-1])
        mol = mol_solve(b.ctx, b.phi, horizon, b.config)
        dx = b.ctx.grid.dx
        nt = len(res.trajectory.times)
        dist = max(
            l2_array(res.trajectory.states[m, i] - mol.states[m, i], dx)
            for m in range(nt) for i in range(b.ctx.n)
        )
        assert dist / max(res.trajectory.l2) <= 1e-3


class TestGlobalContinuation:
    def test_diffusion_l2_monotone_across_windows(self, diffusion_bundle):
        b = diffusion_bundle
        result = global_solve(
            b.ctx, b.phi, b.config, max_windows=4,
            beta=b.report.beta, beta_tilde=b.report.beta_tilde,
        )
        assert len(result.windows) == 4
        assert np.all(np.diff(result.trajectory.l2) <= 1e-12)

    def test_two_windows_equal_manual_restart(self, arrhenius_bundle):
        b = arrhenius_bundle
        w = b.window
        result = global_solve(
            b.ctx, b.phi, b.config, max_windows=2,
            beta=b.report.beta, beta_tilde=b.report.beta_tilde,
            fixed_schedule=[w, w],
        )
        first = picard_solve(b.ctx, b.phi, w, b.config, t0=0.0)
        t_mid = float(first.trajectory.times[-1])
        restart_state = first.trajectory.state(len(first.trajectory.times) - 1)
        second = picard_solve(b.ctx, restart_state, w, b.config, t0=t_mid)
        manual = np.concatenate(
            [first.trajectory.states, second.trajectory.states[1:]], axis=0
        )
        assert np.array_equal(result.trajectory.states, manual)

    def test_state_independent_forcing_single_vs_windowed(self):
        ctx = zero_source_ctx()
        phi = gaussian_phi()
        x = GRID.nodes()
        bump = 0.3 * np.exp(-((x - 0.5) ** 2))

        def forcing(t, W):
            return np.stack([bump * math.cos(2.0 * t)] * 2)

        single = picard_solve(ctx, phi, manual_window(0.2), CFG, source=forcing)
        windowed = global_solve(
            ctx, phi, CFG, max_windows=2, beta=0.0, beta_tilde=0.0,
            fixed_schedule=[manual_window(0.1), manual_window(0.1)],
            source=forcing,
        )
        assert single.trajectory.states.shape == windowed.trajectory.states.shape
        diff = single.trajectory.states - windowed.trajectory.states
        rel = np.max(np.abs(diff)) / np.max(np.abs(single.trajectory.states))
        assert rel <= 1e-10

    def test_monitors_green_on_workhorse(self, arrhenius_bundle):
        b = arrhenius_bundle
        result = global_solve(
            b.ctx, b.phi, b.config, max_windows=3,
            beta=b.report.beta, beta_tilde=b.report.beta_tilde,
        )
        assert np.all(result.trajectory.l2 <= result.gronwall_bound * (1 + 1e-9))
        assert np.all(np.isfinite(result.psi))

    def test_monitor_breach_raises(self):
        ctx = zero_source_ctx()
        x = GRID.nodes()
        phi = [GridFunction(GRID, 1e-3 * np.exp(-(x**2)))] * 2
        bump = np.exp(-(x**2))

        def forcing(t, W):
            return np.stack([bump] * 2)

        # schedule lies about mu=0, so the recorded bound stays at the tiny
        # initial norm while the forcing pumps energy in
        with pytest.raises(BoundViolated):
            global_solve(
                ctx, phi, CFG, max_windows=1, beta=0.0, beta_tilde=0.0,
                fixed_schedule=[manual_window(0.05, mu=0.0)], source=forcing,
            )

    def test_window_infeasible_propagates(self, arrhenius_bundle):
        b = arrhenius_bundle
        # a horizon cap far above the norm-growth cap makes open_window fail
        with pytest.raises(WindowInfeasible):
            global_solve(
                b.ctx, b.phi, b.config, max_windows=1,
                beta=b.report.beta, beta_tilde=b.report.beta_tilde,
                T_override=1e4,
            )
