import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from glfem.errors import ConvergenceError, EscapeError, InputError, NumericalError
from glfem.fe_space import ComplexField, build_space, nodal_interpolate, to_real
from glfem.gl_model import (
    GLProblem, ModelParams, assemble_energy, assemble_gradient, assemble_hessian, assemble_xz_matrix,
    initial_guess, potential,
)
from glfem.mesh import build_uniform
from glfem.optimizer import (
    SolverConfig, classify, gauge_alignment, line_search_quartic, ncg_minimize, pr_beta,
    quartic_minimizer, saddle_escape, verify_minimizer, xz_inner,
)
from glfem.study import error_norms, phase_align

from conftest import random_field

ZERO = potential("zero")
TRIG = potential("paper_trig")


# -- line search ---------------------------------------------------------------------

def q_of(coef, t):
    return sum(c * t**k for k, c in enumerate(coef))


@pytest.mark.parametrize("p", [1, 2])
def test_quartic_matches_energy(p, rng):
    s = build_space(build_uniform(3), p)
    mp = ModelParams(8.0, TRIG)
    for _ in range(5):
        u = ComplexField(s, random_field(rng, s.dof_count, 0.5))
        d = ComplexField(s, random_field(rng, s.dof_count, 0.5))
        # make d a descent direction
        g = assemble_gradient(u, mp)
        if np.vdot(d.coefficients, g).real > 0:
            d = d * -1
        tau, coef = line_search_quartic(u, d, mp)
        assert coef[0] == assemble_energy(u, mp) or coef[0] == pytest.approx(assemble_energy(u, mp), rel=1e-14)
        direct = assemble_energy(ComplexField(s, u.coefficients + tau * d.coefficients), mp)
        assert q_of(coef, tau) == pytest.approx(direct, rel=1e-12)
        assert coef[4] > 0
        dq = coef[1] + 2 * coef[2] * tau + 3 * coef[3] * tau**2 + 4 * coef[4] * tau**3
        d2q = 2 * coef[2] + 6 * coef[3] * tau + 12 * coef[4] * tau**2
        scale = max(abs(c) * max(1.0, tau) ** k for k, c in enumerate(coef))
        assert abs(dq) <= 1e-10 * scale and d2q >= 0


def test_quartic_scalar_case():
    # u = 0, d = 1, A = 0: q(tau) = 1/4 (tau^2 - 1)^2, minimised at tau = 1
    s = build_space(build_uniform(2), 1)
    mp = ModelParams(7.0, ZERO)
    u = ComplexField(s, np.zeros(s.dof_count))
    d = ComplexField(s, np.ones(s.dof_count))
    tau, coef = line_search_quartic(u, d, mp)
    assert tau == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(coef, [0.25, 0, -0.5, 0, 0.25], atol=1e-15)


def test_line_search_failures():
    s = build_space(build_uniform(2), 1)
    mp = ModelParams(2.0, ZERO)
    u = ComplexField(s, np.ones(s.dof_count))
    with pytest.raises(InputError):
        line_search_quartic(u, ComplexField(s, np.zeros(s.dof_count)), mp)
    # u = 1 is the global minimiser for A = 0: no direction decreases E
    with pytest.raises(NumericalError):
        line_search_quartic(u, ComplexField(s, np.full(s.dof_count, 0.1)), mp)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0.05, 3))
def test_quartic_minimizer_vs_grid(c123, c4):
    coef = [0.0, *c123, c4]
    t = np.linspace(-6, 6, 240001)
    q = q_of(coef, t)
    pos = t > 0
    best = t[pos][np.argmin(q[pos])]
    tau = quartic_minimizer(coef)
    if tau is None:
        # no decrease for t > 0 beyond grid resolution
        assert q[pos].min() >= -1e-6
    else:
        assert q_of(coef, tau) <= q[pos].min() + 1e-9
        assert q_of(coef, tau) < 0
    tau_all = quartic_minimizer(coef, positive_only=False)
    if tau_all is not None:
        assert q_of(coef, tau_all) <= q.min() + 1e-9
    del best


# -- beta ------------------------------------------------------------------------

def test_pr_beta_cases(rng):
    M = np.diag([1.0, 2.0, 3.0]).astype(complex)
    r = np.array([1 + 1j, 0.5, -2j])
    assert pr_beta(r, r, M, 1.0) == (0.0, False)
    # negative raw ratio is clipped
    beta, restart = pr_beta(r, 3 * r, M, 1.0)
    assert beta == 0.0 and not restart
    assert pr_beta(r, None, M, 0.0) == (0.0, True)
    assert pr_beta(r, r, M, 0.0) == (0.0, True)
    # hand computation: (r, r - r_prev)_X / ||r_prev||^2
    r_prev = np.array([0.5, 1j, 1.0])
    prev_norm2 = 2.5
    num = sum(M[k, k].real * ((r[k] - r_prev[k]) * np.conj(r[k])).real for k in range(3))
    beta, _ = pr_beta(r, r_prev, M, prev_norm2)
    assert beta == pytest.approx(max(0.0, num / prev_norm2), abs=1e-13)
    assert xz_inner(M, r, r) == pytest.approx(1 * 2 + 2 * 0.25 + 3 * 4)


# -- full runs -----------------------------------------------------------------------

def test_trivial_minimizer():
    s = build_space(build_uniform(3), 1)
    res = ncg_minimize(s, ModelParams(1.0, ZERO), SolverConfig(init="const_phase"))
    assert res.energy <= 1e-12
    assert np.allclose(np.abs(res.state.coefficients), 1.0, atol=1e-6)
    assert res.status == "minimizer"


def test_energy_monotone_and_consistent(minimizer8, kappa8):
    E = [rec.energy for rec in minimizer8.history]
    assert np.all(np.diff(E) <= 1e-14)
    assert minimizer8.energy == pytest.approx(assemble_energy(minimizer8.state, kappa8), rel=1e-14)


def test_converged_residual(minimizer8, kappa8):
    # dual norm of <E'(u), .> in the H1_kappa metric, by a direct solve
    u = minimizer8.state
    prob = GLProblem(u.space, kappa8)
    G = (prob.M + prob.S / kappa8.kappa**2).tocsc().astype(complex)
    g = assemble_gradient(u, kappa8)
    dual = np.sqrt(np.vdot(g, spla.spsolve(G, g)).real)
    c = u.coefficients
    assert dual <= 1e-8 * np.sqrt(np.vdot(c, G @ c).real)


def test_spectrum_at_minimizer(minimizer8, kappa8):
    rep = minimizer8.spectrum
    assert -1e-8 <= rep.eigenvalues[0] <= 1e-8
    assert rep.eigenvalues[1] > 1e-8
    assert gauge_alignment(minimizer8.state, rep.eigenvectors[:, 0], kappa8) >= 0.999
    assert classify(rep) == "minimizer"


def test_verify_unit_state_against_dense():
    s = build_space(build_uniform(2), 1)
    mp = ModelParams(1.0, ZERO)
    u = ComplexField(s, np.ones(s.dof_count))
    rep = verify_minimizer(u, mp)
    prob = GLProblem(s, mp)
    ref = sla.eigh(prob.hessian(u.coefficients).toarray(), prob.real_mass().toarray(),
                   eigvals_only=True)
    assert np.allclose(rep.eigenvalues, ref[:2], atol=1e-8)
    assert abs(rep.eigenvalues[0]) <= 1e-10 and rep.eigenvalues[1] > 0
    assert gauge_alignment(u, rep.eigenvectors[:, 0], mp) >= 0.999


def test_saddle_escape_from_zero_state():
    s = build_space(build_uniform(2), 1)
    mp = ModelParams(20.0, ZERO)
    u = ComplexField(s, np.zeros(s.dof_count))
    rep = verify_minimizer(u, mp)
    assert classify(rep) == "saddle"
    w = rep.eigenvectors[:, 0]
    out = saddle_escape(u, w, mp)
    E1 = assemble_energy(out, mp)
    assert E1 < 0.25
    # brute-force scan along the same line
    wc = w[: s.dof_count] + 1j * w[s.dof_count:]
    taus = np.linspace(-3, 3, 60001)
    scan = [assemble_energy(ComplexField(s, t * wc), mp) for t in taus[::100]]
    assert E1 <= min(scan) + 1e-10


def test_saddle_escape_rejects_positive_curvature(minimizer8, kappa8):
    rep = minimizer8.spectrum
    with pytest.raises(InputError):
        saddle_escape(minimizer8.state, rep.eigenvectors[:, 1], kappa8)


def test_saddle_escape_failure_signal():
    # the gauge direction at a state with tiny negative Rayleigh quotient has
    # no representable decrease
    s = build_space(build_uniform(2), 1)
    mp = ModelParams(1.0, ZERO)
    u = ComplexField(s, np.ones(s.dof_count) * (1 + 1e-12))
    w = to_real(1j * u.coefficients)
    H = assemble_hessian(u, mp)
    if w @ (H @ w) < 0:
        with pytest.raises(EscapeError):
            saddle_escape(u, w, mp)
    else:
        with pytest.raises(InputError):
            saddle_escape(u, w, mp)


def test_ncg_reaches_minimizer_from_saddle_neighbourhood():
    s = build_space(build_uniform(2), 1)
    mp = ModelParams(20.0, ZERO)
    u0 = ComplexField(s, np.full(s.dof_count, 1e-3 + 0j))
    res = ncg_minimize(s, mp, SolverConfig(), u0=u0)
    assert res.status == "minimizer" and res.energy < 1e-10


def test_zero_start_rejected():
    s = build_space(build_uniform(1), 1)
    with pytest.raises(InputError):
        ncg_minimize(s, ModelParams(2.0), SolverConfig(), u0=ComplexField(s, np.zeros(s.dof_count)))


def test_max_iter_error_carries_state():
    s = build_space(build_uniform(3), 1)
    with pytest.raises(ConvergenceError) as exc:
        ncg_minimize(s, ModelParams(8.0), SolverConfig(max_iter=3))
    assert exc.value.state is not None and exc.value.residual > 0


def test_config_validation():
    with pytest.raises(InputError):
        SolverConfig(energy_tol=0)
    with pytest.raises(InputError):
        SolverConfig(max_iter=0)


def test_gauge_freedom_of_runs():
    s = build_space(build_uniform(3), 1)
    mp = ModelParams(1.0, ZERO)
    u0 = initial_guess("linear", s)
    a = ncg_minimize(s, mp, SolverConfig(), u0=u0)
    b = ncg_minimize(s, mp, SolverConfig(), u0=u0 * np.exp(0.9j))
    _, aligned = phase_align(a.state, b.state)
    assert error_norms(a.state, aligned, 1.0)[2] <= 1e-6


def test_determinism():
    s = build_space(build_uniform(3), 2)
    mp = ModelParams(8.0)
    r1 = ncg_minimize(s, mp, SolverConfig())
    r2 = ncg_minimize(s, mp, SolverConfig())
    assert [h.energy for h in r1.history] == [h.energy for h in r2.history]
    assert np.array_equal(r1.state.coefficients, r2.state.coefficients)
