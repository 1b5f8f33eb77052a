import numpy as np
import pytest

from nnm_approp import backbone as bb
from nnm_approp import hb, oracle
from nnm_approp import quadrature as qd
from nnm_approp.model import ExcitationLayout, ModalModel, ModeShapeMatrix, total_energy

TWO_PI = 2 * np.pi


def test_linear_free_oscillation_exact():
    m = ModalModel([101.61, 104.58], [0.0, 0.0])
    U = 1e-3
    T = TWO_PI / m.omega_n[0]
    ts = oracle.integrate(m, [U, 0.0, 0.0, 0.0], (0.0, 10 * T), T / 1024)
    exact = U * np.cos(m.omega_n[0] * ts.t)
    assert np.max(np.abs(ts.q[0] - exact)) < 1e-8 * U
    assert np.all(ts.q[1] == 0.0)


def test_zero_state_stays_zero(model):
    ts = oracle.integrate(model, np.zeros(4), (0.0, 0.1), 1e-4)
    assert not np.any(ts.q) and not np.any(ts.qdot)


def test_energy_conserved_nonlinear(model):
    m0 = model.conservative()
    y0 = [2e-3, -1e-3, 0.0, 0.1]
    ts = oracle.integrate(m0, y0, (0.0, 0.2), 1e-5)
    assert oracle.energy_drift(m0, ts) < 1e-9


def test_fourth_order_convergence(model):
    y0 = np.array([2e-3, 1e-3, 0.0, 0.0])
    P = np.array([0.5, -0.3])

    def end(n):
        return oracle.integrate(model, y0, (0.0, 0.06), 0.06 / n, P, 105.0, store=False).state[:, -1]

    ref = end(4096)
    e1 = np.linalg.norm(end(128) - ref)
    e2 = np.linalg.norm(end(256) - ref)
    assert 3.7 < np.log2(e1 / e2) < 4.3


def test_batch_matches_single(model):
    y0 = np.array([[1e-3, 2e-3], [0.0, -1e-3], [0.0, 0.0], [0.05, 0.0]])
    P = np.array([[0.1, 0.2], [0.0, 0.3]])
    W = np.array([100.0, 110.0])
    T = TWO_PI / W
    batch = oracle.integrate(model, y0, (np.zeros(2), T), T / 512, P, W, store=False)
    for k in range(2):
        one = oracle.integrate(model, y0[:, k], (0.0, T[k]), T[k] / 512, P[:, k], W[k], store=False)
        assert np.allclose(batch.state[:, -1, k], one.state[:, -1], rtol=1e-12, atol=1e-18)


def test_linear_frf_point_is_periodic(model, shapes):
    lin = ModalModel(model.omega_n, model.zeta)
    P = shapes.row("cross_tip_left") * 0.3
    W = TWO_PI * 16.3
    s = hb.HarmonicSolution(1, qd.linear_coefficients(lin, P, W, 1), W, forcing=P)
    assert oracle.periodicity_residual(lin, s) < 1e-9


def test_layout_forcing_needs_modal_vector(model, shapes):
    lay = ExcitationLayout((0,), (1.0,), 100.0)
    s = hb.HarmonicSolution(1, np.zeros((2, 3)) + 1e-3, 100.0, forcing=lay)
    with pytest.raises(TypeError):
        oracle.periodicity_residual(model, s)
    P, W = oracle.modal_forcing(shapes, lay)
    assert W == 100.0 and np.allclose(P, shapes.row(0))


@pytest.fixture(scope="module")
def quadrature_points(model, shapes, numeric_backbones):
    """Single-force quadrature solutions at 18 Hz (NNM1 side) for increasing H."""
    (s,) = bb.numeric_at(model, numeric_backbones[1], TWO_PI * 18.0)
    out = {}
    for H in (1, 3, 5, 7):
        prob, u, _ = qd.seed_isolated_quadrature(model, shapes, "main_beam_offset", s, H=H)
        out[H] = (prob.solution(u), prob.modal_force(u))
    return out


def test_periodicity_improves_with_harmonics(model, quadrature_points):
    res = [oracle.periodicity_residual(model, *quadrature_points[H]) for H in (1, 3, 5, 7)]
    assert all(a > b for a, b in zip(res, res[1:]))
    assert res[-1] < 1e-5


def test_perturbed_solution_fails_periodicity(model, quadrature_points):
    s, P = quadrature_points[7]
    c = s.coeffs.copy()
    c[0, 1:3] *= 1.01
    bad = hb.HarmonicSolution(s.H, c, s.Omega)
    assert oracle.periodicity_residual(model, bad, P) > 1e-3


def test_measured_energies_closed_form():
    m = ModalModel([101.61, 104.58], [7.6e-3, 2.6e-3])
    P = np.array([0.4, -0.2])
    W = 103.0
    X = qd.linear_coefficients(m, P, W, 1)
    s = hb.HarmonicSolution(1, X, W, forcing=P)
    ts = oracle.one_period(m, s)
    E = oracle.measured_energies(m, ts, P, W)
    U1, U2, f1, f2 = hb.amplitude_phase(s)
    c = m.damping_coefficients
    exact = (np.pi * c[0] * W * U1**2, np.pi * c[1] * W * U2**2,
             np.pi * P[0] * U1 * np.sin(f1), np.pi * P[1] * U2 * np.sin(f2))
    assert np.allclose(E, exact, rtol=1e-6)


def _sampled_period(s, n=4096):
    t = np.linspace(0.0, s.period, n + 1)
    return oracle.TimeSeries(t, s.q(t), s.qdot(t))


@pytest.mark.parametrize("nnm", [1, 2])
def test_two_force_appropriation_balances_each_mode(model, shapes, two_force_pair, nnm):
    """Single-harmonic two-force appropriated motion: E_Di = E_Pi per mode."""
    br = qd.quadrature_locus(model, shapes, list(two_force_pair), mode=nnm, H=1)
    prob = br.meta["problem"]
    for pt in br.points[:: max(1, len(br) // 30)]:
        s, P = prob.solution(pt.unknowns), prob.modal_force(pt.unknowns)
        E_D1, E_D2, E_P1, E_P2 = oracle.measured_energies(model, _sampled_period(s), P, s.Omega)
        assert abs(E_D1 - E_P1) / E_D1 < 1e-4
        assert abs(E_D2 - E_P2) / E_D2 < 1e-4


def test_two_force_locus_mode_balance_tracks_harmonics(model, two_force_loci):
    """Converged multi-harmonic points: higher harmonics carry coupling work between modes."""
    for br in two_force_loci.values():
        prob = br.meta["problem"]
        for pt in br.points[:: max(1, len(br) // 6)]:
            s, P = prob.solution(pt.unknowns), prob.modal_force(pt.unknowns)
            E = oracle.measured_energies(model, oracle.one_period(model, s, P), P, s.Omega)
            U = np.hypot(s.coeffs[:, 1], s.coeffs[:, 2])
            r3 = np.max(np.hypot(s.coeffs[:, 5], s.coeffs[:, 6])) / U.max()
            for i in (0, 1):
                if U[i] < 1e-4 * U.max():
                    continue  # relative balance of a vanishing mode is noise
                assert abs(E[i] - E[i + 2]) / E[i] < 1e-4 + 0.5 * r3


def test_verify_points(model, numeric_backbones, quadrature_points):
    m0 = model.conservative()
    sols = bb.numeric_solutions(numeric_backbones[1])[5::400]
    out = oracle.verify_points(m0, sols)
    assert np.all(out["periodicity"] < 1e-5) and np.all(out["energy_balance"] < 1e-6)
    s, P = quadrature_points[7]
    out = oracle.verify_points(model, [s], [P])
    assert out["periodicity"][0] < 1e-5 and out["energy_balance"][0] < 1e-6
    assert oracle.global_energy_balance(model, s, 1.05 * P) > 1e-2


def test_global_balance_zero_for_conservative(model):
    assert oracle.global_energy_balance(model.conservative(), hb.HarmonicSolution.zeros(1, 1.0), [0, 0]) == 0.0


def test_divergence_detected(model):
    with pytest.raises(oracle.DivergenceError):
        oracle.integrate(model.conservative(), [10.0, 10.0, 0.0, 0.0], (0.0, 1.0), 1e-3)


def test_integrate_rejects_bad_step(model):
    with pytest.raises(ValueError):
        oracle.integrate(model, np.zeros(4), (0.0, 1.0), 0.0)


def test_time_series_must_increase():
    with pytest.raises(ValueError):
        oracle.TimeSeries(np.array([0.0, 1.0, 1.0]), np.zeros((2, 3)), np.zeros((2, 3)))


def test_total_energy_linear():
    m = ModalModel([2.0, 3.0], [0.0, 0.0])
    assert total_energy(m, np.array([1.0, 0.0]), np.array([0.0, 2.0])) == pytest.approx(2.0 + 2.0)
    assert ModeShapeMatrix(["a"], [[1.0, 0.0]]).to_physical([3.0, 4.0]) == pytest.approx([3.0])
