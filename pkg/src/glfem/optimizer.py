"""Energy-adaptive nonlinear conjugate gradients with exact quartic line search."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, EscapeError, InputError, NumericalError
from .fe_space import ComplexField, FESpace, to_complex, to_real
from .gl_model import GLProblem, ModelParams, get_problem, initial_guess
from .numerics import EigenReport, smallest_eigenpairs, solve_spd

log = logging.getLogger(__name__)

# H + M is positive semidefinite for every state, so any shift below -1
# lies under the whole mass-generalised spectrum of E''
HESSIAN_SHIFT = -1.05


@dataclass
class SolverConfig:
    energy_tol: float = 1e-15
    grad_tol: float = 1e-9
    max_iter: int = 20000
    linear_rel_tol: float = 1e-12
    escape_max: int = 5
    init: str = "const_phase"
    eigen_tol: float = 1e-8
    restart_every: int = 200
    verify: bool = True
    # refresh period of the lagged factorisation used to precondition the
    # inner solves (0 disables it and falls back to Jacobi)
    precond_refresh: int = 25
    # the energy rule only stops once the X_u residual is below this
    # multiple of the X_u norm of the iterate
    polish_tol: float = 2e-9

    def __post_init__(self):
        for name in ("energy_tol", "grad_tol", "linear_rel_tol", "eigen_tol", "polish_tol"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")


@dataclass
class IterationRecord:
    iter: int
    energy: float
    energy_diff: float
    beta: float
    tau: float
    residual: float


@dataclass
class MinimizerResult:
    state: ComplexField
    energy: float
    iterations: int
    escapes_used: int
    energy_diff: float
    residual: float
    spectrum: Optional[EigenReport] = None
    status: str = "unverified"
    history: list = field(default_factory=list, repr=False)

    @property
    def lambda1(self):
        return None if self.spectrum is None else float(self.spectrum.eigenvalues[0])

    @property
    def lambda2(self):
        return None if self.spectrum is None else float(self.spectrum.eigenvalues[1])


# ----------------------------------------------------------------------------
# line search and beta
# ----------------------------------------------------------------------------

def quartic_minimizer(coef, positive_only=True):
    """Minimiser of ``q(t) = sum coef[k] t^k`` over ``t > 0`` (or all reals).

    Returns ``None`` when no stationary point in the admissible range
    decreases ``q`` below ``q(0)``.
    """
    c0, c1, c2, c3, c4 = coef
    roots = np.roots([4 * c4, 3 * c3, 2 * c2, c1])
    scale = max(abs(c1), abs(c2), abs(c3), abs(c4), 1e-300)
    cand = []
    for r in roots:
        if abs(r.imag) <= 1e-7 * max(1.0, abs(r)):
            t = r.real
            # Newton polish on q'(t), kept only while it shrinks |q'|
            dq = lambda s: c1 + 2 * c2 * s + 3 * c3 * s**2 + 4 * c4 * s**3  # noqa: E731
            d1 = dq(t)
            for _ in range(3):
                d2 = 2 * c2 + 6 * c3 * t + 12 * c4 * t**2
                if d2 <= 0 or d1 == 0:
                    break
                trial = t - d1 / d2
                d1_trial = dq(trial)
                if not abs(d1_trial) < abs(d1):
                    break
                t, d1 = trial, d1_trial
            if positive_only and t <= 0:
                continue
            cand.append(t)
    if not cand:
        return None
    q = lambda t: c1 * t + c2 * t**2 + c3 * t**3 + c4 * t**4  # noqa: E731
    best = min(cand, key=q)
    if q(best) >= 0 and not (q(best) == 0 and scale == 0):
        return None
    return best


def line_search_quartic(u: ComplexField, d: ComplexField, mp: ModelParams):
    """Exact line search along ``d``; returns ``(tau, coefficients)``."""
    if not np.any(d.coefficients):
        raise InputError("line search direction must not vanish")
    prob = get_problem(u.space, mp)
    coef = prob.quartic_coefficients(u.coefficients, d.coefficients)
    tau = quartic_minimizer(coef)
    if tau is None:
        raise NumericalError("no descent along the search direction")
    return tau, coef


def xz_inner(metric, a, b) -> float:
    """``(a, b)_{X,z} = Re(b^H M_z a)``."""
    return float(np.vdot(b, metric @ a).real)


def pr_beta(r, r_prev, metric, prev_norm2):
    """Clipped Polak-Ribiere coefficient.

    ``r`` and ``r_prev`` are the (negative) preconditioned gradients
    ``delta_u - u`` of the current and previous iterate, ``metric`` the
    current energy-adaptive matrix and ``prev_norm2`` the squared norm of
    ``r_prev`` in the previous metric.

    Returns
    -------
    beta : float
    restart : bool
        True if the denominator vanished.
    """
    if r_prev is None or prev_norm2 <= 0.0:
        return 0.0, True
    num = xz_inner(metric, r - r_prev, r)
    return max(0.0, num / prev_norm2), False


# ----------------------------------------------------------------------------
# inner solves
# ----------------------------------------------------------------------------

class _LaggedPreconditioner:
    """Sparse LU of an earlier energy-adaptive matrix, refreshed periodically.

    Consecutive metrics differ only in the ``|u|^2`` weight, so the lagged
    factor is an excellent preconditioner for PCG.
    """

    def __init__(self, refresh):
        self.refresh = refresh
        self.lu = None
        self.age = 0

    def __call__(self, Mz, slow=False):
        if self.refresh <= 0:
            return None
        if self.lu is None or self.age >= self.refresh or slow:
            self.lu = spla.splu(Mz.tocsc(), permc_spec="MMD_AT_PLUS_A")
            self.age = 0
        self.age += 1
        return self.lu.solve


def _solve_delta(Mz, rhs, x0, cfg, pre):
    M = pre(Mz)
    try:
        x, info = solve_spd(Mz, rhs, rel_tol=cfg.linear_rel_tol, x0=x0,
                            preconditioner=M, return_info=True,
                            max_iter=max(2000, Mz.shape[0] // 2))
    except NumericalError:
        # badly conditioned metric (|u| close to 0 where the kinetic part is
        # nearly singular): fall back to a direct factorisation
        log.debug("PCG stalled on the energy-adaptive system; using sparse LU")
        return spla.splu(Mz.tocsc()).solve(rhs)
    if M is not None and info.iterations > 30:
        pre.age = pre.refresh  # refactor next time
    return x


# ----------------------------------------------------------------------------
# main loop
# ----------------------------------------------------------------------------

def _ncg_run(prob: GLProblem, c, cfg: SolverConfig, history, it0=0, energy_rule=True):
    """Iterate from coefficients ``c`` until a stopping rule fires."""
    pre = _LaggedPreconditioner(cfg.precond_refresh if prob.space.dof_count > 2000 else 0)
    r_prev = None
    prev_norm2 = 0.0
    d_prev = None
    u_q = prob.values(c)
    Kc = prob.K @ c
    E = prob.energy(c, u_q)
    dE = np.inf
    res = np.inf
    it = it0
    while True:
        Mz, rhs = prob.xz_matrix(c, u_q)
        delta = _solve_delta(Mz, rhs, c, cfg, pre)
        r = delta - c
        norm2 = xz_inner(Mz, r, r)
        res = np.sqrt(max(norm2, 0.0))
        small = res <= cfg.polish_tol * np.sqrt(xz_inner(Mz, c, c))
        if res < cfg.grad_tol:
            history.append(IterationRecord(it, E, 0.0, 0.0, 0.0, res))
            return c, E, dE, res, it
        if it >= cfg.max_iter:
            raise ConvergenceError(
                f"no convergence in {cfg.max_iter} iterations (residual {res:.3e})",
                state=c, residual=res,
            )
        if cfg.restart_every and it % cfg.restart_every == 0:
            beta, restart = 0.0, True
        else:
            beta, restart = pr_beta(r, r_prev, Mz, prev_norm2)
        d = r if beta == 0.0 or d_prev is None else r + beta * d_prev
        coef = prob.quartic_coefficients(c, d, u_q, Kc)
        tau = quartic_minimizer(coef)
        if tau is None and beta != 0.0:
            d, beta = r, 0.0
            coef = prob.quartic_coefficients(c, d, u_q, Kc)
            tau = quartic_minimizer(coef)
        if tau is None:
            # no decrease representable along the steepest direction
            history.append(IterationRecord(it, E, 0.0, beta, 0.0, res))
            return c, E, 0.0, res, it
        decrease = -(coef[1] * tau + coef[2] * tau**2 + coef[3] * tau**3 + coef[4] * tau**4)
        c = c + tau * d
        u_q = prob.values(c)
        Kc = prob.K @ c
        E = prob.energy(c, u_q)
        dE = decrease
        it += 1
        history.append(IterationRecord(it, E, dE, beta, tau, res))
        if it % 100 == 0:
            log.debug("iter %d  E=%.15e  dE=%.3e  res=%.3e", it, E, dE, res)
        r_prev, prev_norm2, d_prev = r, norm2, d
        if energy_rule and abs(dE) < cfg.energy_tol and small:
            return c, E, dE, res, it


def verify_minimizer(u: ComplexField, mp: ModelParams, k=2, tol=1e-8) -> EigenReport:
    """Two smallest eigenpairs of E''(u) in the L2-mass metric."""
    prob = get_problem(u.space, mp)
    H = prob.hessian(u.coefficients)
    return smallest_eigenpairs(H, prob.real_mass(), k=k, tol=tol, shift=HESSIAN_SHIFT)


def classify(report: EigenReport, tol=1e-8) -> str:
    lam = report.eigenvalues
    if lam[0] < -tol:
        return "saddle"
    if len(lam) > 1 and lam[1] <= tol:
        return "degenerate"
    return "minimizer"


def gauge_alignment(u: ComplexField, vector, mp: ModelParams) -> float:
    """``|cos|`` of the mass-metric angle between a real-layout vector and ``vec(i u)``."""
    prob = get_problem(u.space, mp)
    M = prob.real_mass()
    g = to_real(1j * u.coefficients)
    x = np.asarray(vector, dtype=float)
    num = abs(g @ (M @ x))
    den = np.sqrt((g @ (M @ g)) * (x @ (M @ x)))
    return float(num / den) if den > 0 else 0.0


def saddle_escape(u: ComplexField, direction, mp: ModelParams) -> ComplexField:
    """One optimal step along a negative-curvature eigenvector (either sign)."""
    prob = get_problem(u.space, mp)
    direction = np.asarray(direction)
    w = to_complex(direction) if np.isrealobj(direction) else direction
    if w.shape != u.coefficients.shape or not np.any(w):
        raise InputError("escape direction must be a nonzero field on the same space")
    H = prob.hessian(u.coefficients)
    wr = to_real(w)
    if wr @ (H @ wr) >= 0:
        raise InputError("escape direction has nonnegative curvature")
    coef = prob.quartic_coefficients(u.coefficients, w)
    tau = quartic_minimizer(coef, positive_only=False)
    if tau is None:
        raise EscapeError("no energy decrease along the escape direction")
    new = u.coefficients + tau * w
    E0 = prob.energy(u.coefficients)
    E1 = prob.energy(new)
    if not E1 < E0:
        raise EscapeError(f"escape step did not lower the energy ({E1:.16e} >= {E0:.16e})")
    return ComplexField(u.space, new)


def ncg_minimize(s: FESpace, mp: ModelParams, cfg: SolverConfig = None,
                 u0: ComplexField = None) -> MinimizerResult:
    """Minimise the GL energy on ``s`` from ``u0`` (or the configured preset)."""
    cfg = cfg or SolverConfig()
    prob = get_problem(s, mp)
    if u0 is None:
        u0 = initial_guess(cfg.init, s)
    c = np.array(u0.coefficients, dtype=complex)
    if not np.any(c):
        raise InputError("initial state must not vanish")
    history = []
    escapes = 0
    it = 0
    energy_rule = True
    while True:
        c, E, dE, res, it = _ncg_run(prob, c, cfg, history, it, energy_rule)
        state = ComplexField(s, c)
        result = MinimizerResult(state, prob.energy(c), it, escapes, dE, res,
                                 history=history)
        if not cfg.verify:
            return result
        report = verify_minimizer(state, mp, tol=cfg.eigen_tol)
        result.spectrum = report
        result.status = classify(report, cfg.eigen_tol)
        if result.status != "saddle":
            return result
        if energy_rule and gauge_alignment(state, report.eigenvectors[:, 0], mp) > 0.99:
            # The negative value belongs to the gauge mode: the energy rule
            # stopped while <E'(u), u> was still of the order of the
            # tolerance.  Polish on the residual rule alone and re-check.
            log.info("gauge eigenvalue %.3e below tolerance; polishing", report.eigenvalues[0])
            energy_rule = False
            continue
        if escapes >= cfg.escape_max:
            return result
        log.info("saddle detected (lambda1=%.3e); escaping", report.eigenvalues[0])
        try:
            state = saddle_escape(state, report.eigenvectors[:, 0], mp)
        except EscapeError:
            log.warning("escape failed; returning saddle")
            return result
        escapes += 1
        energy_rule = True
        c = state.coefficients
