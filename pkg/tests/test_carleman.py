import numpy as np
import pytest

from degen_control.carleman import (SourceSplit, beta_divergence, build_weights,
                                    c2_threshold, cacciopoli_check, calibrate_s0,
                                    carleman_functionals, eval_phi,
                                    eval_weight_log, random_smooth_field,
                                    ratio_experiment, solve_terminal_source,
                                    _sample_field, random_space_time_field)
from degen_control.coefficients import Case, power_coefficient
from degen_control.errors import NonFiniteIntegral, OutOfDomain, WeightInvalid
from degen_control.mesh import build_grid
from degen_control.pde import Trajectory

from conftest import make_problem

SQRT = power_coefficient(0.5)


def test_c2_default_exceeds_threshold():
    w = build_weights(SQRT, (0.3, 0.9), T=1.0)
    assert c2_threshold(SQRT) == pytest.approx(2 / 3)
    assert w.c2 == pytest.approx(0.7, abs=1e-12)
    assert w.c2 > c2_threshold(SQRT)


def test_kappa_formulas():
    w = build_weights(SQRT, (0.3, 0.9), T=1.0)
    assert w.kappa_minus == pytest.approx(0.5, abs=1e-15)
    assert w.kappa_plus == pytest.approx(0.7, abs=1e-15)
    width = w.kappa_plus - w.kappa_minus
    assert w.omega_prime[0] == pytest.approx(w.kappa_minus + width / 4)
    assert w.omega_prime[1] == pytest.approx(w.kappa_plus - width / 4)


def test_psi_deg_quadrature_against_closed_form():
    # int_0^x tau^(1/2) dtau = (2/3) x^(3/2)
    w = build_weights(SQRT, (0.3, 0.9), T=1.0, c2=1.0)
    for x in (0.1, 0.5, 1.0):
        assert w.psi_deg(x) == pytest.approx(1.0 - (2 / 3) * x ** 1.5, abs=1e-8)
    assert w.psi_deg(1.0) == pytest.approx(1 / 3, abs=1e-8)


def test_theta_value_and_blowup():
    w = build_weights(SQRT, (0.3, 0.9), T=1.0)
    assert float(w.theta(0.5)) == pytest.approx(256.0)
    logs = [eval_weight_log(w, 0.5, t, 1.0) for t in (0.5, 0.1, 0.01, 0.001)]
    assert all(l2 < l1 for l1, l2 in zip(logs, logs[1:]))


def test_theta_symmetric_about_midpoint():
    w = build_weights(SQRT, (0.3, 0.9), T=0.8)
    ts = np.array([0.1, 0.2, 0.3])
    assert np.allclose(w.theta(ts), w.theta(0.8 - ts), rtol=1e-14)


def test_eval_phi_domain():
    w = build_weights(SQRT, (0.3, 0.9), T=1.0)
    with pytest.raises(OutOfDomain):
        eval_phi(w, 0.5, 0.0)
    with pytest.raises(OutOfDomain):
        eval_phi(w, 0.5, 1.0)
    with pytest.raises(OutOfDomain):
        eval_weight_log(w, 0.5, -0.1, 2.0)


def test_cutoff_and_blend_values():
    w = build_weights(SQRT, (0.3, 0.9), T=1.0)
    assert float(w.xi(w.kappa_minus)) == 1.0
    assert float(w.xi(w.kappa_plus)) == 0.0
    xs = np.linspace(0, 1, 101)
    assert np.all((w.xi(xs) >= 0.0) & (w.xi(xs) <= 1.0))
    # on the pure degenerate branch eta equals psi_deg
    assert float(w.eta(w.kappa_minus)) == pytest.approx(w.psi_deg(w.kappa_minus))
    assert float(w.eta(0.2)) == pytest.approx(w.psi_deg(0.2))
    # on the pure classical branch eta equals psi_cls
    assert float(w.eta(0.8)) == pytest.approx(float(w.psi_cls(0.8)))


def test_blend_is_c1_across_cutoff_interval():
    w = build_weights(SQRT, (0.3, 0.9), T=1.0)
    for x0 in (w.kappa_minus, w.kappa_plus):
        for delta in (1e-4, 1e-6):
            jump = abs(float(w.eta(x0 + delta)) - float(w.eta(x0 - delta)))
            djump = abs(float(w.eta_prime(x0 + delta)) - float(w.eta_prime(x0 - delta)))
            assert jump <= 200.0 * delta
            assert djump <= 2e4 * delta
    # analytic derivative agrees with central differences
    xs = np.linspace(0.05, 0.95, 37)
    fd = (w.eta(xs + 1e-7) - w.eta(xs - 1e-7)) / 2e-7
    assert np.allclose(w.eta_prime(xs), fd, rtol=1e-5, atol=1e-5)


def test_rho_shape():
    w = build_weights(SQRT, (0.3, 0.9), T=1.0)
    assert float(w.rho(0.0)) == pytest.approx(0.0, abs=1e-15)
    assert float(w.rho(1.0)) == pytest.approx(0.0, abs=1e-12)
    xs = np.linspace(0.01, 0.99, 99)
    assert np.all(w.rho(xs) > 0.0)
    assert float(w.rho(w.rho_peak)) == pytest.approx(1.0)
    ap, bp = w.omega_prime
    outside = np.concatenate([np.linspace(0.01, ap - 0.01, 20),
                              np.linspace(bp + 0.01, 0.99, 20)])
    assert np.all(np.abs(w.rho_prime(outside)) > 0.0)


def test_eta_prime_nonzero_beyond_cutoff():
    g = build_grid(128, 1.0)
    w = build_weights(SQRT, (0.3, 0.9), T=1.0, grid=g)
    region = g.nodes[(g.nodes > w.kappa_plus) & (g.nodes < 0.9)]
    assert np.all(np.abs(w.eta_prime(region)) > 0.0)


def test_weight_positivity_guard():
    with pytest.raises(WeightInvalid):
        build_weights(SQRT, (0.3, 0.9), T=1.0, c2=0.01)


def test_omega_must_be_interior():
    with pytest.raises(ValueError):
        build_weights(SQRT, (0.0, 0.9), T=1.0)


def test_monotone_damping_in_s():
    w = build_weights(SQRT, (0.3, 0.9), T=1.0)
    logs = [eval_weight_log(w, 0.4, 0.3, s) for s in (1.0, 2.0, 4.0, 8.0)]
    assert all(b < a for a, b in zip(logs, logs[1:]))


# -- functionals -----------------------------------------------------------------

def _zero_traj(p):
    return Trajectory(grid=p.grid, times=p.times,
                      states=np.zeros((p.M + 1, p.grid.N)), case=p.case)


def test_functionals_zero_inputs():
    p = make_problem(N=32, M=16, T=1.0)
    w = build_weights(p.a, p.omega, p.T)
    v = _zero_traj(p)
    F = np.zeros((p.M + 1, p.grid.N))
    assert carleman_functionals(p, w, v, F, 2.0, "lemma") == (0.0, 0.0)
    split = SourceSplit(F0=F, F1=F)
    assert carleman_functionals(p, w, v, split, 2.0, "theorem") == (0.0, 0.0)
    assert cacciopoli_check(p, w, v, F, 2.0) == (0.0, 0.0)


def test_functionals_quadratic_homogeneity(rng):
    p = make_problem(N=48, M=32, T=2.0)
    w = build_weights(p.a, p.omega, p.T, lam=0.5)
    vT = random_smooth_field(rng, p.case)(p.grid.nodes)
    F = _sample_field(random_space_time_field(rng, p.case, p.T), p.grid, p.times)
    v = solve_terminal_source(p, vT, F)
    lhs1, rhs1 = carleman_functionals(p, w, v, F, 4.0, "lemma")
    v10 = Trajectory(grid=p.grid, times=p.times, states=10.0 * v.states, case=p.case)
    lhs2, rhs2 = carleman_functionals(p, w, v10, 10.0 * F, 4.0, "lemma")
    assert lhs2 == pytest.approx(100.0 * lhs1, rel=1e-12)
    assert rhs2 == pytest.approx(100.0 * rhs1, rel=1e-12)


def test_functionals_reject_nonfinite():
    p = make_problem(N=32, M=16, T=1.0)
    w = build_weights(p.a, p.omega, p.T)
    v = _zero_traj(p)
    v.states[3, 5] = np.inf
    with pytest.raises(NonFiniteIntegral):
        carleman_functionals(p, w, v, None, 2.0, "lemma")


def test_functional_input_validation():
    p = make_problem(N=32, M=16, T=1.0)
    w = build_weights(p.a, p.omega, p.T)
    v = _zero_traj(p)
    with pytest.raises(ValueError):
        carleman_functionals(p, w, v, None, -1.0, "lemma")
    with pytest.raises(ValueError):
        carleman_functionals(p, w, v, None, 2.0, "bogus")


def test_lemma_ratio_smoke(rng):
    p = make_problem(N=48, M=48, T=3.0, y0=np.zeros(48))
    w = build_weights(p.a, p.omega, p.T, lam=0.5)
    res = ratio_experiment(p, w, [1, 4, 16], 8, "lemma", rng)
    assert all(np.isfinite(r) and r > 0 for r in res.max_ratios)
    assert all(m <= M for m, M in zip(res.median_ratios, res.max_ratios))
    assert w.s0 == res.s0


def test_theorem_ratio_smoke(rng):
    p = make_problem(a=power_coefficient(1.5), N=48, M=48, T=3.0,
                     y0=np.zeros(48))
    w = build_weights(p.a, p.omega, p.T, lam=0.5)
    res = ratio_experiment(p, w, [1, 4, 16], 8, "theorem", rng)
    assert all(np.isfinite(r) and r > 0 for r in res.max_ratios)


def test_cacciopoli_source_monotonicity(rng):
    p = make_problem(N=48, M=32, T=2.0)
    w = build_weights(p.a, p.omega, p.T, lam=0.5)
    vT = random_smooth_field(rng, p.case)(p.grid.nodes)
    F = _sample_field(random_space_time_field(rng, p.case, p.T), p.grid, p.times)
    v = solve_terminal_source(p, vT, F)
    lhs1, rhs1 = cacciopoli_check(p, w, v, F, 4.0)
    lhs2, rhs2 = cacciopoli_check(p, w, v, 10.0 * F, 4.0)
    assert lhs2 == pytest.approx(lhs1)
    assert rhs2 > rhs1
    assert lhs2 / rhs2 < lhs1 / rhs1


def test_cacciopoli_stable_under_refinement(rng):
    vals = {}
    for N in (64, 128):
        p = make_problem(N=N, M=64, T=3.0, y0=np.zeros(N))
        w = build_weights(p.a, p.omega, p.T, lam=0.5)
        local_rng = np.random.default_rng(99)
        ratios = []
        for _ in range(20):
            vT = random_smooth_field(local_rng, p.case)(p.grid.nodes)
            F = _sample_field(random_space_time_field(local_rng, p.case, p.T),
                              p.grid, p.times)
            v = solve_terminal_source(p, vT, F)
            lhs, rhs = cacciopoli_check(p, w, v, F, 4.0)
            ratios.append(lhs / rhs)
        vals[N] = max(ratios)
    assert abs(vals[128] - vals[64]) <= 0.20 * vals[64]


def test_calibrate_s0():
    flat = [10.0, 10.2, 10.1, 10.15]
    s0, ok = calibrate_s0([1, 2, 4, 8], flat)
    assert ok and s0 == 1.0
    growing = [1.0, 2.0, 4.0, 8.0]
    s0, ok = calibrate_s0([1, 2, 4, 8], growing)
    assert not ok and s0 == 8.0
    bends = [1.0, 5.0, 5.1, 5.12]
    s0, ok = calibrate_s0([1, 2, 4, 8], bends)
    assert ok and s0 == 2.0


def test_random_fields_respect_boundary_conditions(rng):
    f_w = random_smooth_field(rng, Case.WDP)
    assert abs(float(f_w(np.array([0.0]))[0])) < 1e-12
    assert abs(float(f_w(np.array([1.0]))[0])) < 1e-12
    f_s = random_smooth_field(rng, Case.SDP)
    assert abs(float(f_s(np.array([1.0]))[0])) < 1e-12
    slope0 = (float(f_s(np.array([1e-6]))[0]) - float(f_s(np.array([0.0]))[0])) / 1e-6
    assert abs(slope0) < 1e-3


def test_beta_divergence_constant_product_vanishes():
    g = build_grid(32, 1.0)
    # beta * F1 constant => divergence zero at interior nodes
    beta = lambda x: np.ones_like(np.asarray(x, dtype=float))
    F1 = np.ones(g.N)
    div = beta_divergence(g, beta, F1, Case.WDP)
    assert np.allclose(div[1:-1], 0.0, atol=1e-12)


def test_terminal_source_solver_zero_data():
    p = make_problem(N=32, M=16, T=1.0)
    v = solve_terminal_source(p, np.zeros(p.grid.N), None)
    assert np.all(v.states == 0.0)
