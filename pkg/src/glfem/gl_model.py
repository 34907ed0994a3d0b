"""Ginzburg-Landau energy, derivatives and the energy-adaptive metric.

All quantities are assembled on a :class:`GLProblem`, which caches the
state-independent matrices of one (space, parameters) pair:

* ``K``   -- Hermitian magnetic stiffness, ``K[j, k] = ((i/kappa) grad phi_k + A phi_k,
  (i/kappa) grad phi_j + A phi_j)``,
* ``M``   -- real mass matrix, ``S`` -- real stiffness matrix,
* ``M_1A2`` -- mass weighted by ``1 + |A|^2``.

The magnetic potential is evaluated at quadrature points.  Complex
residuals follow the convention ``g_j = <E'(u), phi_j> + i <E'(u), i phi_j>``
so that ``<E'(u), v> = Re(v^H g)``.  Real-linear operators use the
``[Re; Im]`` stacking of :func:`glfem.fe_space.to_real`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, InputError
from .fe_space import ComplexField, FESpace, Integrator, nodal_interpolate
from .numerics import HERMITIAN, SYMMETRIC, SparseSymOp

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class MagneticPotential:
    """Preset tag plus a vectorised evaluator ``(x, y) -> (Ax, Ay)``."""

    tag: str
    evaluator: Optional[Callable] = field(default=None, compare=False, hash=False)
    key: str = ""

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.tag == "paper_trig":
            ax = SQRT2 * np.sin(np.pi * x) * np.cos(np.pi * y)
            ay = -SQRT2 * np.cos(np.pi * x) * np.sin(np.pi * y)
        elif self.tag == "zero":
            ax = np.zeros(np.broadcast(x, y).shape)
            ay = np.zeros_like(ax)
        else:
            ax, ay = self.evaluator(x, y)
            ax = np.broadcast_to(np.asarray(ax, dtype=float), np.broadcast(x, y).shape)
            ay = np.broadcast_to(np.asarray(ay, dtype=float), ax.shape)
        return np.stack([ax, ay], axis=-1)


def potential(tag: str, evaluator=None) -> MagneticPotential:
    if tag in ("paper_trig", "zero"):
        return MagneticPotential(tag)
    if tag == "custom":
        if evaluator is None:
            raise ConfigurationError("custom potential needs an evaluator")
        return MagneticPotential("custom", evaluator, key=str(id(evaluator)))
    raise ConfigurationError(f"unknown magnetic potential preset {tag!r}")


@dataclass(frozen=True)
class ModelParams:
    kappa: float
    potential: MagneticPotential = field(default_factory=lambda: potential("paper_trig"))

    def __post_init__(self):
        if not np.isfinite(self.kappa) or self.kappa < 1:
            raise ConfigurationError(f"kappa must be >= 1, got {self.kappa}")


def vector_potential_eval(p: MagneticPotential, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return p(x[..., 0], x[..., 1])


def quadrature_degree(p: int) -> int:
    # |u|^4 is of degree 4p; the extra margin covers the non-polynomial A
    return max(4 * p, 2 * p + 4)


class GLProblem:
    """Cached assembly context for one space and one set of model parameters."""

    def __init__(self, space: FESpace, params: ModelParams):
        self.space = space
        self.params = params
        self.integ = integ = Integrator(space, quadrature_degree(space.degree))
        kappa = params.kappa
        pts = integ.points
        self.A_q = params.potential(pts[..., 0], pts[..., 1])
        self.A2_q = np.sum(self.A_q**2, axis=-1)

        pattern = integ.pattern
        S_loc = integ.stiffness_local()
        M_loc = integ.weighted_mass_local()
        MA2_loc = integ.weighted_mass_local(self.A2_q)
        T_loc = integ.advection_local(self.A_q)
        K_loc = S_loc / kappa**2 + MA2_loc + (1j / kappa) * (T_loc - np.swapaxes(T_loc, 1, 2))
        K_loc = 0.5 * (K_loc + np.conj(np.swapaxes(K_loc, 1, 2)))
        del T_loc

        self.S = pattern.assemble(S_loc)
        self.M = pattern.assemble(M_loc)
        self.MA2 = pattern.assemble(MA2_loc)
        self.K = pattern.assemble(K_loc)
        self.M_1A2 = pattern.matrix(self.M.data + self.MA2.data)
        self._K_plus_MA2 = self.K.data + self.MA2.data

    # -- pointwise helpers --------------------------------------------------

    def values(self, c):
        return self.integ.values(c)

    def weighted_mass(self, coef_q) -> sp.csr_matrix:
        return self.integ.weighted_mass(coef_q)

    # -- energy and derivatives ---------------------------------------------

    def energy(self, c, u_q=None) -> float:
        c = np.asarray(c)
        u_q = self.values(c) if u_q is None else u_q
        kinetic = 0.5 * np.vdot(c, self.K @ c).real
        pot = 0.25 * self.integ.integrate((np.abs(u_q) ** 2 - 1.0) ** 2)
        return float(kinetic + pot)

    def gradient(self, c, u_q=None) -> np.ndarray:
        c = np.asarray(c, dtype=complex)
        u_q = self.values(c) if u_q is None else u_q
        return self.K @ c + self.integ.load((np.abs(u_q) ** 2 - 1.0) * u_q)

    def hessian(self, c) -> sp.csr_matrix:
        """Real symmetric 2N x 2N matrix of the real-bilinear form of E''(u)."""
        u_q = self.values(c)
        mod2 = np.abs(u_q) ** 2
        u2 = u_q**2
        base = 2.0 * mod2 - 1.0
        pattern = self.integ.pattern
        M_rr = self.integ.weighted_mass_local(base + u2.real)
        M_ii = self.integ.weighted_mass_local(base - u2.real)
        M_ri = self.integ.weighted_mass_local(u2.imag)
        Kr = self.K.data.real
        Ki = self.K.data.imag
        d_rr = pattern.data(M_rr)
        d_ii = pattern.data(M_ii)
        d_ri = pattern.data(M_ri)
        H_rr = pattern.matrix(Kr + d_rr)
        H_ii = pattern.matrix(Kr + d_ii)
        H_ri = pattern.matrix(-Ki + d_ri)  # rows: real test part, cols: imaginary trial part
        H_ir = pattern.matrix(Ki + d_ri)
        return sp.bmat([[H_rr, H_ri], [H_ir, H_ii]], format="csr")

    def xz_matrix(self, z, z_q=None):
        """Matrix of the energy-adaptive inner product at ``z`` and the rhs ``((1+|A|^2) z, phi_j)``."""
        z = np.asarray(z, dtype=complex)
        z_q = self.values(z) if z_q is None else z_q
        mz = self.integ.pattern.data(self.integ.weighted_mass_local(np.abs(z_q) ** 2))
        Mz = self.integ.pattern.matrix(self._K_plus_MA2 + mz)
        return Mz, self.M_1A2 @ z

    def quartic_coefficients(self, c, d, u_q=None, Kc=None):
        """Coefficients ``c0..c4`` of ``tau -> E(u + tau d)``."""
        c = np.asarray(c, dtype=complex)
        d = np.asarray(d, dtype=complex)
        u_q = self.values(c) if u_q is None else u_q
        d_q = self.values(d)
        Kc = self.K @ c if Kc is None else Kc
        Kd = self.K @ d
        a0 = np.abs(u_q) ** 2 - 1.0
        a1 = 2.0 * (u_q * np.conj(d_q)).real
        a2 = np.abs(d_q) ** 2
        w = self.integ.weights
        return np.array([
            0.5 * np.vdot(c, Kc).real + 0.25 * np.sum(w * a0 * a0),
            np.vdot(d, Kc).real + 0.5 * np.sum(w * a0 * a1),
            0.5 * np.vdot(d, Kd).real + 0.25 * np.sum(w * (a1 * a1 + 2.0 * a0 * a2)),
            0.5 * np.sum(w * a1 * a2),
            0.25 * np.sum(w * a2 * a2),
        ])

    def real_mass(self) -> sp.csr_matrix:
        return sp.block_diag([self.M, self.M], format="csr")

    def h1kappa_gram(self) -> sp.csr_matrix:
        G = self.M + self.S / self.params.kappa**2
        return sp.block_diag([G, G], format="csr")

    def l2_norm(self, c) -> float:
        return float(np.sqrt(np.vdot(c, self.M @ c).real))

    def seminorm(self, c) -> float:
        return float(np.sqrt(max(np.vdot(c, self.S @ c).real, 0.0)))


@lru_cache(maxsize=4)
def get_problem(space: FESpace, params: ModelParams) -> GLProblem:
    return GLProblem(space, params)


# -- operation-level API ----------------------------------------------------

def assemble_energy(u: ComplexField, mp: ModelParams) -> float:
    return get_problem(u.space, mp).energy(u.coefficients)


def assemble_gradient(u: ComplexField, mp: ModelParams) -> np.ndarray:
    return get_problem(u.space, mp).gradient(u.coefficients)


def assemble_hessian(u: ComplexField, mp: ModelParams) -> SparseSymOp:
    return SparseSymOp(get_problem(u.space, mp).hessian(u.coefficients), SYMMETRIC)


def assemble_xz_matrix(z: ComplexField, mp: ModelParams):
    Mz, rhs = get_problem(z.space, mp).xz_matrix(z.coefficients)
    return SparseSymOp(Mz, HERMITIAN), rhs


INITIAL_GUESSES = {
    "const_phase": lambda x, y: (0.8 + 0.6j) * np.ones_like(x),
    "linear": lambda x, y: 1j + x - 0.5,
    "vortex": lambda x, y: (x + 1j * y) * np.exp(-(x**2 + y**2) / 2.0),
}


def initial_guess(preset: str, s: FESpace) -> ComplexField:
    try:
        f = INITIAL_GUESSES[preset]
    except KeyError:
        raise ConfigurationError(
            f"unknown initial guess {preset!r}; choose from {sorted(INITIAL_GUESSES)}"
        ) from None
    u0 = nodal_interpolate(f, s)
    if not np.any(u0.coefficients):
        raise InputError("initial guess must not vanish")
    return u0
