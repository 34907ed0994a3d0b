"""P1/P2 Lagrange spaces on criss meshes.

Besides dof bookkeeping this module carries the quadrature tables, the
reference basis, an :class:`Integrator` that precomputes element geometry
for vectorised assembly, and the inter-level prolongation operator.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .errors import ConfigurationError, InputError, StructuralError
from .mesh import Mesh, is_refinement_of

# ----------------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------------

# symmetric rules: (orbit, parameters, weight) with weights normalised to 1
_SYMMETRIC_RULES = {
    1: [("S3", (), 1.0)],
    2: [("S21", (1.0 / 6.0,), 1.0 / 3.0)],
    4: [
        ("S21", (0.445948490915965,), 0.223381589678011),
        ("S21", (0.091576213509771,), 0.109951743655322),
    ],
    6: [
        ("S21", (0.249286745170910,), 0.116786275726379),
        ("S21", (0.063089014491502,), 0.050844906370207),
        ("S111", (0.053145049844817, 0.310352451033784), 0.082851075618374),
    ],
    8: [
        ("S3", (), 0.144315607677787),
        ("S21", (0.459292588292723,), 0.095091634267285),
        ("S21", (0.170569307751760,), 0.103217370534718),
        ("S21", (0.050547228317031,), 0.032458497623198),
        ("S111", (0.008394777409958, 0.263112829634638), 0.027230314174435),
    ],
}
MAX_QUADRATURE_DEGREE = 10


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle (0,0), (1,0), (0,1).

    ``points`` holds Cartesian reference coordinates; weights sum to 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def barycentric(self) -> np.ndarray:
        x, y = self.points.T
        return np.column_stack([1.0 - x - y, x, y])

    def __len__(self):
        return len(self.weights)


def _expand_orbits(orbits):
    bary, w = [], []
    for kind, params, weight in orbits:
        if kind == "S3":
            cands = [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
        elif kind == "S21":
            a = params[0]
            cands = [(a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)]
        else:
            a, b = params
            cands = sorted(set(itertools.permutations((a, b, 1 - a - b))))
        for c in cands:
            bary.append(c)
            w.append(weight)
    bary = np.array(bary)
    return bary[:, 1:].copy(), 0.5 * np.array(w)


def _conical_rule(degree):
    # collapsed Gauss-Jacobi product rule, exact for total degree 2n-1
    n = (degree + 2) // 2
    s, ws = roots_jacobi(n, 1.0, 0.0)  # weight (1 - s)
    t, wt = roots_jacobi(n, 0.0, 0.0)
    s = 0.5 * (s + 1.0)
    t = 0.5 * (t + 1.0)
    ws = ws / 4.0
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    x = S.ravel()
    y = (T * (1.0 - S)).ravel()
    w = np.outer(ws, wt).ravel()
    return np.column_stack([x, y]), w


def quadrature(min_degree: int) -> QuadratureRule:
    """Smallest tabulated rule that integrates polynomials of ``min_degree`` exactly."""
    if min_degree > MAX_QUADRATURE_DEGREE:
        raise ConfigurationError(
            f"no quadrature table for degree {min_degree} (max {MAX_QUADRATURE_DEGREE})"
        )
    min_degree = max(int(min_degree), 1)
    for deg in sorted(_SYMMETRIC_RULES):
        if deg >= min_degree:
            pts, w = _expand_orbits(_SYMMETRIC_RULES[deg])
            return QuadratureRule(pts, w, deg)
    pts, w = _conical_rule(min_degree)
    return QuadratureRule(pts, w, min_degree)


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of ``x^a y^b`` over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


# ----------------------------------------------------------------------------
# reference basis
# ----------------------------------------------------------------------------

# P2 local order: vertices 0, 1, 2 then midpoints of edges (0,1), (1,2), (2,0)
_P2_EDGES = ((0, 1), (1, 2), (2, 0))


def reference_nodes(p: int) -> np.ndarray:
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if p == 1:
        return verts
    if p == 2:
        mids = np.array([(verts[a] + verts[b]) / 2 for a, b in _P2_EDGES])
        return np.vstack([verts, mids])
    raise ConfigurationError(f"unsupported polynomial degree {p}")


def basis_at(p: int, points):
    """Reference basis at many points: values (npts, nloc), gradients (npts, nloc, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    lam = np.stack([1.0 - x - y, x, y], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if p == 1:
        vals = lam
        grads = np.broadcast_to(dlam, (len(x), 3, 2)).copy()
        return vals, grads
    if p == 2:
        vals = np.empty((len(x), 6))
        grads = np.empty((len(x), 6, 2))
        for i in range(3):
            vals[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
            grads[:, i] = (4 * lam[:, i] - 1)[:, None] * dlam[i]
        for k, (a, b) in enumerate(_P2_EDGES):
            vals[:, 3 + k] = 4 * lam[:, a] * lam[:, b]
            grads[:, 3 + k] = 4 * (lam[:, a][:, None] * dlam[b] + lam[:, b][:, None] * dlam[a])
        return vals, grads
    raise ConfigurationError(f"unsupported polynomial degree {p}")


def eval_basis(p: int, xhat):
    """Values (nloc,) and gradients (nloc, 2) of the reference basis at one point."""
    vals, grads = basis_at(p, np.asarray(xhat, dtype=float).reshape(1, 2))
    return vals[0], grads[0]


# ----------------------------------------------------------------------------
# spaces and fields
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FESpace:
    mesh: Mesh
    degree: int
    element_dofs: np.ndarray
    dof_points: np.ndarray

    @property
    def dof_count(self) -> int:
        return self.dof_points.shape[0]

    N = dof_count

    @property
    def local_dim(self) -> int:
        return self.element_dofs.shape[1]

    @cached_property
    def dof_multiplicity(self) -> np.ndarray:
        """Number of elements sharing each dof (the count in Oswald averaging)."""
        return np.bincount(self.element_dofs.ravel(), minlength=self.dof_count)

    @cached_property
    def inverse_maps(self):
        B, b, det = self.mesh.jacobians()
        return np.linalg.inv(B), b

    def __repr__(self):
        return f"FESpace(P{self.degree}, level={self.mesh.level}, N={self.dof_count})"


def build_space(m: Mesh, p: int) -> FESpace:
    if p not in (1, 2):
        raise ConfigurationError(f"unsupported polynomial degree p={p}; expected 1 or 2")
    if p == 1:
        return FESpace(m, 1, m.elements.copy(), m.vertices.copy())
    n = m.n_cells
    nf = 2 * n + 1
    ix = m.elements % (n + 1)
    iy = m.elements // (n + 1)
    X = 2 * ix
    Y = 2 * iy
    cols = [X[:, i] for i in range(3)] + [X[:, a] // 2 + X[:, b] // 2 for a, b in _P2_EDGES]
    rows = [Y[:, i] for i in range(3)] + [Y[:, a] // 2 + Y[:, b] // 2 for a, b in _P2_EDGES]
    element_dofs = np.stack(rows, axis=1) * nf + np.stack(cols, axis=1)
    coords = np.linspace(0.0, 1.0, nf)
    Xg, Yg = np.meshgrid(coords, coords)
    dof_points = np.column_stack([Xg.ravel(), Yg.ravel()])
    return FESpace(m, 2, element_dofs.astype(np.int64), dof_points)


class ComplexField:
    """Discrete complex state: dof coefficients of a function in ``space``."""

    def __init__(self, space: FESpace, coefficients):
        coefficients = np.asarray(coefficients, dtype=complex)
        if coefficients.shape != (space.dof_count,):
            raise StructuralError(
                f"expected {space.dof_count} coefficients, got {coefficients.shape}"
            )
        self.space = space
        self.coefficients = coefficients

    def real_view(self) -> np.ndarray:
        """Coefficients as 2N reals: all real parts, then all imaginary parts."""
        return to_real(self.coefficients)

    @classmethod
    def from_real(cls, space, x):
        return cls(space, to_complex(x))

    def __call__(self, points):
        return evaluate(self.space, self.coefficients, points)

    def copy(self):
        return ComplexField(self.space, self.coefficients.copy())

    def __mul__(self, scalar):
        return ComplexField(self.space, self.coefficients * scalar)

    __rmul__ = __mul__

    def __add__(self, other):
        _check_same_space(self, other)
        return ComplexField(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        _check_same_space(self, other)
        return ComplexField(self.space, self.coefficients - other.coefficients)

    def __repr__(self):
        return f"ComplexField({self.space!r})"


def _check_same_space(a, b):
    if a.space is not b.space:
        raise StructuralError("fields live on different spaces")


def to_real(c) -> np.ndarray:
    c = np.asarray(c)
    return np.concatenate([c.real, c.imag])


def to_complex(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]


def reference_coordinates(space: FESpace, points):
    """Element index and reference coordinates of physical points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    elem = space.mesh.locate(pts)
    Binv, b = space.inverse_maps
    xhat = np.einsum("eab,eb->ea", Binv[elem], pts - b[elem])
    return elem, np.clip(xhat, 0.0, 1.0)


def evaluate(space: FESpace, coefficients, points, gradient=False):
    """Point values (and optionally gradients) of a finite element function."""
    elem, xhat = reference_coordinates(space, points)
    vals, grads = basis_at(space.degree, xhat)
    local = np.asarray(coefficients)[space.element_dofs[elem]]
    out = np.einsum("ni,ni->n", local, vals)
    if not gradient:
        return out
    Binv, _ = space.inverse_maps
    g_ref = np.einsum("ni,nia->na", local, grads)
    g = np.einsum("nba,nb->na", Binv[elem], g_ref)
    return out, g


def nodal_interpolate(f, s: FESpace) -> ComplexField:
    """Lagrange interpolant; ``f`` is called as ``f(x, y)`` on arrays."""
    x, y = s.dof_points.T
    vals = np.asarray(f(x, y), dtype=complex)
    vals = np.broadcast_to(vals, x.shape).copy()
    bad = ~np.isfinite(vals)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise InputError(f"non-finite value at dof {j}, point ({x[j]:.6g}, {y[j]:.6g})")
    return ComplexField(s, vals)


def prolongation_matrix(coarse: FESpace, fine: FESpace) -> sp.csr_matrix:
    """Sparse (N_fine x N_coarse) matrix re-expressing coarse functions on ``fine``."""
    if not is_refinement_of(fine.mesh, coarse.mesh) or fine.degree < coarse.degree:
        raise StructuralError(
            f"{fine!r} is not a nested refinement of {coarse!r}"
        )
    elem, xhat = reference_coordinates(coarse, fine.dof_points)
    vals, _ = basis_at(coarse.degree, xhat)
    vals[np.abs(vals) < 1e-14] = 0.0
    rows = np.repeat(np.arange(fine.dof_count), coarse.local_dim)
    cols = coarse.element_dofs[elem].ravel()
    P = sp.csr_matrix(
        (vals.ravel(), (rows, cols)), shape=(fine.dof_count, coarse.dof_count)
    )
    P.eliminate_zeros()
    return P


def prolongate(u_c: ComplexField, s_f: FESpace) -> ComplexField:
    P = prolongation_matrix(u_c.space, s_f)
    return ComplexField(s_f, P @ u_c.coefficients)


# ----------------------------------------------------------------------------
# integration context
# ----------------------------------------------------------------------------

class SparsityPattern:
    """CSR pattern of all element couplings, with a scatter map for fast reassembly.

    Assembling through :meth:`assemble` always produces matrices with the
    same ``indices``/``indptr``, so they can be combined through their data
    arrays.  Contributions are summed in element order, which makes the
    result independent of any threading and exactly (conjugate) symmetric
    whenever the local matrices are.
    """

    def __init__(self, element_dofs, n):
        ne, nloc = element_dofs.shape
        rows = np.repeat(element_dofs, nloc, axis=1).ravel()
        cols = np.tile(element_dofs, (1, nloc)).ravel()
        keys = rows.astype(np.int64) * n + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.n = n
        self.scatter = inverse.astype(np.int64)
        self.indices = (uniq % n).astype(np.int32 if n < 2**31 else np.int64)
        self.indptr = np.concatenate(
            [[0], np.cumsum(np.bincount(uniq // n, minlength=n))]
        ).astype(self.indices.dtype)
        self.nnz = uniq.size

    def data(self, local):
        """Sum local matrices (ne, nloc, nloc) into the CSR data array."""
        flat = np.ascontiguousarray(local).reshape(-1)
        if np.iscomplexobj(flat):
            re = np.bincount(self.scatter, weights=flat.real, minlength=self.nnz)
            im = np.bincount(self.scatter, weights=flat.imag, minlength=self.nnz)
            return re + 1j * im
        return np.bincount(self.scatter, weights=flat, minlength=self.nnz)

    def matrix(self, data) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def assemble(self, local) -> sp.csr_matrix:
        return self.matrix(self.data(local))


class Integrator:
    """Element quadrature data for one space and one rule.

    Physical gradients are never stored for all quadrature points at once;
    they are produced chunk by chunk where needed.
    """

    def __init__(self, space: FESpace, degree: int, chunk: int = 8192):
        self.space = space
        self.rule = quadrature(degree)
        self.chunk = chunk
        B, b, det = space.mesh.jacobians()
        self.det = det
        self.inv_T = np.transpose(np.linalg.inv(B), (0, 2, 1))
        self.weights = np.abs(det)[:, None] * self.rule.weights[None, :]
        self.points = np.einsum("eab,qb->eqa", B, self.rule.points) + b[:, None, :]
        self.phi, self.dphi = basis_at(space.degree, self.rule.points)
        nloc = space.local_dim
        pp = self.phi[:, :, None] * self.phi[:, None, :]
        self._phiphi = pp.reshape(len(self.rule), nloc * nloc)

    @cached_property
    def pattern(self) -> SparsityPattern:
        return SparsityPattern(self.space.element_dofs, self.space.dof_count)

    @property
    def num_elements(self):
        return self.weights.shape[0]

    def chunks(self):
        ne = self.num_elements
        for start in range(0, ne, self.chunk):
            yield slice(start, min(start + self.chunk, ne))

    def gradients(self, sl=slice(None)):
        """Physical basis gradients (ne, nq, nloc, 2) on a slice of elements."""
        return np.einsum("eab,qib->eqia", self.inv_T[sl], self.dphi)

    def values(self, c):
        """Values of a finite element function at all quadrature points (ne, nq)."""
        return np.asarray(c)[self.space.element_dofs] @ self.phi.T

    def gradient_values(self, c):
        """Gradients at all quadrature points (ne, nq, 2)."""
        local = np.asarray(c)[self.space.element_dofs]
        g_ref = np.einsum("ei,qia->eqa", local, self.dphi)
        return np.einsum("eab,eqb->eqa", self.inv_T, g_ref)

    def integrate(self, f_q):
        return np.sum(self.weights * f_q)

    def load(self, f_q):
        """Vector of integrals of ``f`` against every basis function."""
        local = (self.weights * f_q) @ self.phi
        idx = self.space.element_dofs.ravel()
        n = self.space.dof_count
        if np.iscomplexobj(local):
            return (np.bincount(idx, local.real.ravel(), n)
                    + 1j * np.bincount(idx, local.imag.ravel(), n))
        return np.bincount(idx, local.ravel(), n)

    def weighted_mass_local(self, coef_q=None):
        wc = self.weights if coef_q is None else self.weights * coef_q
        nloc = self.space.local_dim
        local = (wc @ self._phiphi).reshape(-1, nloc, nloc)
        return 0.5 * (local + np.swapaxes(local, 1, 2))

    def weighted_mass(self, coef_q=None) -> sp.csr_matrix:
        """Matrix of ``(c phi_k, phi_j)`` for a real coefficient given at quadrature points."""
        return self.pattern.assemble(self.weighted_mass_local(coef_q))

    def stiffness_local(self):
        nloc = self.space.local_dim
        out = np.empty((self.num_elements, nloc, nloc))
        for sl in self.chunks():
            g = self.gradients(sl)
            out[sl] = np.einsum("eq,eqia,eqja->eij", self.weights[sl], g, g)
        return 0.5 * (out + np.swapaxes(out, 1, 2))

    def stiffness(self) -> sp.csr_matrix:
        return self.pattern.assemble(self.stiffness_local())

    def advection_local(self, field_q):
        """Local matrices ``T[e, j, k] = sum_q w phi_j (a . grad phi_k)`` for a vector field."""
        nloc = self.space.local_dim
        out = np.empty((self.num_elements, nloc, nloc))
        for sl in self.chunks():
            g = self.gradients(sl)
            adv = np.einsum("eqa,eqka->eqk", field_q[sl], g)
            out[sl] = np.einsum("eq,qj,eqk->ejk", self.weights[sl], self.phi, adv)
        return out


def l2_norm(space: FESpace, c, degree=None) -> float:
    integ = Integrator(space, degree or 2 * space.degree)
    v = integ.values(c)
    return float(np.sqrt(integ.integrate(np.abs(v) ** 2)))


# ----------------------------------------------------------------------------
# element-wise H1 projection and Oswald averaging
# ----------------------------------------------------------------------------

def _projection_integrator(s: FESpace):
    return Integrator(s, min(2 * s.degree + 4, MAX_QUADRATURE_DEGREE))


def broken_h1_projection(v, grad_v, s: FESpace, elements=None, integ=None):
    """Element-wise H1 projection of ``v`` onto P_p(K) for many elements.

    ``v(x, y)`` returns values and ``grad_v(x, y)`` returns the pair of
    partial derivatives.  The result holds local nodal coefficients
    (nel, nloc); since the basis is nodal these are the values of
    ``Pi_K v`` at the element's dof nodes.
    """
    integ = integ or _projection_integrator(s)
    sel = np.arange(integ.num_elements) if elements is None else np.atleast_1d(elements)
    pts = integ.points[sel]
    x, y = pts[..., 0], pts[..., 1]
    vq = np.broadcast_to(np.asarray(v(x, y), dtype=complex), x.shape)
    gx, gy = grad_v(x, y)
    gq = np.stack(
        [np.broadcast_to(np.asarray(gx, dtype=complex), x.shape),
         np.broadcast_to(np.asarray(gy, dtype=complex), x.shape)],
        axis=-1,
    )
    w = integ.weights[sel]
    grads = integ.gradients(sel)
    nloc = s.local_dim
    S = np.einsum("eq,eqia,eqja->eij", w, grads, grads)
    m = w @ integ.phi
    rhs_grad = np.einsum("eq,eqa,eqia->ei", w, gq, grads)
    mean = np.sum(w * vq, axis=1)

    system = np.zeros((len(sel), nloc + 1, nloc + 1))
    system[:, :nloc, :nloc] = 0.5 * (S + np.swapaxes(S, 1, 2))
    system[:, :nloc, nloc] = m
    system[:, nloc, :nloc] = m
    rhs = np.concatenate([rhs_grad, mean[:, None]], axis=1)
    if np.any(np.abs(np.linalg.det(system)) < 1e-300):
        from .errors import NumericalError
        raise NumericalError("singular local projection system")
    sol = np.linalg.solve(system, rhs[..., None])[..., 0]
    return sol[:, :nloc]


def elementwise_h1_projection(v, grad_v, k: int, s: FESpace) -> np.ndarray:
    """Local nodal coefficients of ``Pi_K v`` on element ``k``."""
    return broken_h1_projection(v, grad_v, s, elements=[k])[0]


def oswald_interpolate(v, grad_v, s: FESpace, dirichlet=None) -> ComplexField:
    """Conforming quasi-interpolant: average the broken projections at every dof.

    Parameters
    ----------
    dirichlet : callable, optional
        Marker ``dirichlet(x, y) -> bool`` for dof nodes on a Dirichlet
        boundary; those coefficients are set to zero.
    """
    local = broken_h1_projection(v, grad_v, s)
    idx = s.element_dofs.ravel()
    n = s.dof_count
    total = (np.bincount(idx, local.real.ravel(), n)
             + 1j * np.bincount(idx, local.imag.ravel(), n))
    coeffs = total / s.dof_multiplicity
    if dirichlet is not None:
        x, y = s.dof_points.T
        coeffs[np.asarray(dirichlet(x, y), dtype=bool)] = 0.0
    return ComplexField(s, coeffs)
