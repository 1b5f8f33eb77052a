import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnm_approp import backbone as bb
from nnm_approp import hb, oracle
from nnm_approp.model import crossbeam_table1, nonlinear_force

TWO_PI = 2 * np.pi

# Reference values from tests/oracles/shooting_oracle.py (DOP853 shooting, rtol 1e-12):
# fundamental amplitudes (U1, U2) of the symmetric NNM orbits.
SHOOTING_NNM1_18HZ = (0.013605152077025217, 0.08401962687390953)
SHOOTING_NNM2_17HZ = (0.0027353048698839414, 0.0015886034976862354)

# Regression pins established by the first run (Hz).
GAP_ANALYTIC_HZ = 0.12168696285126757
GAP_NUMERIC_HZ = 0.12188895701776303


def test_backbone_params():
    assert bb.BackboneParams(1).phi_d == 0.0
    assert bb.BackboneParams(-1).phi_d == np.pi
    assert bb.phase_flag(1) == -1 and bb.phase_flag(2) == 1
    with pytest.raises(ValueError):
        bb.BackboneParams(0)
    with pytest.raises(ValueError):
        bb.BackboneParams.for_nnm(3)


@pytest.mark.parametrize("p", [-1, 1])
def test_analytic_residual_linear_limit(model, p):
    w1 = model.omega_n[0]
    assert np.array_equal(bb.analytic_backbone_residual(model, 0.0, 0.0, w1, p), [0.0, 0.0])
    # the U1-linear coefficient vanishes at Omega = omega_n1
    h = 1e-9
    slope = bb.analytic_backbone_residual(model, h, 0.0, w1, p)[0] / h
    assert abs(slope) < 1e-6 * w1**2


def test_analytic_single_mode_root(model):
    assert np.sqrt(10324.59 + 96) == pytest.approx(102.081, abs=5e-4)
    W = np.sqrt(model.omega_n[0] ** 2 + 0.75 * 128e6 * 1e-6)  # unrounded omega_n1**2
    assert W == pytest.approx(102.081, abs=5e-4)
    r = bb.analytic_backbone_residual(model, 1e-3, 0.0, W, -1)
    assert abs(r[0]) < 1e-9 * model.omega_n[0] ** 2 * 1e-3
    # the root found by the solver agrees
    U = bb.solve_analytic_at(model.with_params(gamma=[128e6, 0, 0, 0, 0]), -1, W, [1.1e-3, 0.0])
    assert U[0] == pytest.approx(1e-3, rel=1e-9)


def _projected_residual(model, U1, U2, W, p):
    """Fundamental cosine balance of q = (U1, p U2) cos(theta), by quadrature of N(q)."""
    th = np.arange(512) * TWO_PI / 512
    q = np.array([U1 * np.cos(th), p * U2 * np.cos(th)])
    N = nonlinear_force(model.without_quadratic(), q)
    proj = 2 * np.mean(N * np.cos(th), axis=1)
    r1 = (model.omega_n[0] ** 2 - W**2) * U1 + proj[0]
    r2 = (model.omega_n[1] ** 2 - W**2) * p * U2 + proj[1]
    return np.array([r1, p * r2])


@settings(max_examples=60, deadline=None)
@given(U1=st.floats(0, 5e-3), U2=st.floats(0, 5e-3), f=st.floats(15.0, 21.0), p=st.sampled_from([-1, 1]))
def test_analytic_residual_matches_projection(U1, U2, f, p):
    m = crossbeam_table1()
    W = TWO_PI * f
    got = bb.analytic_backbone_residual(m, U1, U2, W, p)
    exp = _projected_residual(m, U1, U2, W, p)
    scale = m.omega_n[0] ** 2 * max(U1, U2, 1e-12)
    assert np.allclose(got, exp, atol=1e-12 * scale)


@settings(max_examples=30, deadline=None)
@given(U1=st.floats(1e-6, 5e-3), U2=st.floats(1e-6, 5e-3), f=st.floats(15.0, 21.0), p=st.sampled_from([-1, 1]))
def test_analytic_residual_sign_symmetry(U1, U2, f, p):
    m = crossbeam_table1()
    r = bb.analytic_backbone_residual(m, U1, U2, TWO_PI * f, p)
    assert np.allclose(bb.analytic_backbone_residual(m, -U1, -U2, TWO_PI * f, p), -r)
    # flipping one amplitude is the same as flipping the phase flag
    assert np.allclose(bb.analytic_backbone_residual(m, U1, -U2, TWO_PI * f, -p) * [1, -1], r)


@pytest.mark.parametrize("nnm, f0", [(1, 16.172), (2, 16.644)])
def test_branches_start_at_linear_frequency(analytic_backbones, numeric_backbones, nnm, f0):
    for br in (analytic_backbones[nnm], numeric_backbones[nnm]):
        assert bb.backbone_table(br)[0, 0] / TWO_PI == pytest.approx(f0, abs=1e-3)


@pytest.mark.parametrize("nnm", [1, 2])
def test_branches_end_at_window(analytic_backbones, numeric_backbones, nnm):
    for br in (analytic_backbones[nnm], numeric_backbones[nnm]):
        assert br.termination.value == "parameter_bound"
        f = bb.backbone_table(br)[:, 0] / TWO_PI
        assert f.max() >= 20.0 or f.min() <= 16.1


@pytest.mark.parametrize("nnm", [1, 2])
def test_phase_difference_is_zero_or_pi(numeric_backbones, nnm):
    T = bb.backbone_table(numeric_backbones[nnm])
    target = 0.0 if nnm == 2 else np.pi
    dev = np.abs(np.angle(np.exp(1j * (T[:, 3] - target))))
    # the seed point has U2 = 0 exactly on NNM1 and U1 = 0 on NNM2
    assert np.max(dev[1:]) < 1e-6


@pytest.mark.parametrize("nnm", [1, 2])
def test_half_period_shift_symmetry(model, numeric_backbones, nnm):
    sols = bb.numeric_solutions(numeric_backbones[nnm])
    for s in sols[:: max(1, len(sols) // 10)]:
        c = s.coeffs.copy()
        k = np.arange(1, s.H + 1)
        odd = (k % 2 == 1)
        for j in k[odd]:
            c[:, 2 * j - 1:2 * j + 1] *= -1
        shifted = hb.HarmonicSolution(s.H, c, s.Omega)
        r = hb.hb_residual(model.conservative(), shifted)
        assert np.max(np.abs(r)) < 1e-7 * model.omega_n[0] ** 2 * np.max(np.abs(c))
        U1, U2, f1, f2 = hb.amplitude_phase(s)
        V1, V2, g1, g2 = hb.amplitude_phase(shifted)
        assert (V1, V2) == pytest.approx((U1, U2))
        if U1 > 0:
            assert np.exp(1j * g1) == pytest.approx(-np.exp(1j * f1), abs=1e-12)


@pytest.mark.parametrize("nnm", [1, 2])
def test_energy_conserved_over_one_period(model, numeric_backbones, nnm):
    m0 = model.conservative()
    sols = bb.numeric_solutions(numeric_backbones[nnm])
    for s in sols[1:: max(1, len(sols) // 6)]:
        series = oracle.one_period(m0, s)
        assert oracle.energy_drift(m0, series) < 1e-8


@pytest.mark.parametrize("nnm", [1, 2])
def test_single_harmonic_without_quadratic_matches_analytic(model, nnm):
    m = model.without_quadratic()
    p = bb.phase_flag(nnm)
    br = bb.solve_numeric_backbone(m, p, H=1)
    for s in bb.numeric_solutions(br)[1::7]:
        U1, U2, f1, f2 = hb.amplitude_phase(s)
        U = bb.solve_analytic_at(m, p, s.Omega, [U1, U2])
        assert np.allclose(np.abs(U), [U1, U2], rtol=1e-8, atol=1e-8 * max(U1, U2))


def test_numeric_backbone_matches_shooting_nnm1(model, numeric_backbones):
    (s,) = bb.numeric_at(model, numeric_backbones[1], TWO_PI * 18.0)
    U1, U2, _, _ = hb.amplitude_phase(s)
    assert np.allclose([U1, U2], SHOOTING_NNM1_18HZ, rtol=1e-7)


def test_numeric_backbone_matches_shooting_nnm2(model, numeric_backbones):
    (s,) = bb.numeric_at(model, numeric_backbones[2], TWO_PI * 17.0)
    U1, U2, _, _ = hb.amplitude_phase(s)
    assert np.allclose([U1, U2], SHOOTING_NNM2_17HZ, rtol=1e-7)


def test_numeric_at_outside_branch(model, numeric_backbones):
    assert bb.numeric_at(model, numeric_backbones[1], TWO_PI * 30.0) == []


def test_backbone_points_pass_periodicity(model, numeric_backbones):
    sols = bb.numeric_solutions(numeric_backbones[1])[::100]
    res = oracle.periodicity_residuals(model.conservative(), sols)
    assert np.max(res) < 1e-5


def test_veering_gap(analytic_backbones, numeric_backbones):
    ga = bb.frequency_gap(analytic_backbones[1], analytic_backbones[2])
    gn = bb.frequency_gap(numeric_backbones[1], numeric_backbones[2])
    assert ga > 0 and gn > 0
    assert ga == pytest.approx(GAP_ANALYTIC_HZ, rel=1e-6)
    assert gn == pytest.approx(GAP_NUMERIC_HZ, rel=1e-6)


def test_analytic_resampling(model):
    br = bb.solve_analytic_backbone(model, -1, n_points=25)
    assert len(br) == 25
    for W, U1, U2 in bb.analytic_points(br):
        r = bb.analytic_backbone_residual(model, U1, U2, W, -1)
        assert np.max(np.abs(r)) < 1e-8 * model.omega_n[0] ** 2 * 1e-3


def test_analytic_solution_signal():
    s = bb.analytic_solution(100.0, 2e-3, 1e-3, -1, H=3)
    assert s.H == 3
    assert s.coeffs[0, 1] == 2e-3 and s.coeffs[1, 1] == -1e-3
    assert np.count_nonzero(s.coeffs) == 2
