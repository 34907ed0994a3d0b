"""Slow, independent reference implementations used as test oracles.

Everything here loops over elements and builds the Lagrange basis from a
monomial Vandermonde system, sharing no code with the library except the
quadrature tables and the mesh.
"""
import numpy as np

SQ2 = np.sqrt(2.0)

NODES = {
    1: np.array([[0, 0], [1, 0], [0, 1]], dtype=float),
    2: np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], dtype=float),
}


def _monomials(p, x, y):
    if p == 1:
        return np.stack([np.ones_like(x), x, y], -1), np.stack(
            [np.stack([0 * x, 0 * x], -1), np.stack([1 + 0 * x, 0 * x], -1),
             np.stack([0 * x, 1 + 0 * x], -1)], -2)
    v = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], -1)
    g = np.stack([
        np.stack([0 * x, 0 * x], -1), np.stack([1 + 0 * x, 0 * x], -1),
        np.stack([0 * x, 1 + 0 * x], -1), np.stack([2 * x, 0 * x], -1),
        np.stack([y, x], -1), np.stack([0 * x, 2 * y], -1)], -2)
    return v, g


def lagrange_basis(p, pts):
    """Reference values (npts, n) and gradients (npts, n, 2) via a Vandermonde solve."""
    V, _ = _monomials(p, NODES[p][:, 0], NODES[p][:, 1])
    coef = np.linalg.inv(V)  # columns: coefficients of each nodal function
    mv, mg = _monomials(p, pts[:, 0], pts[:, 1])
    return mv @ coef, np.einsum("qma,mn->qna", mg, coef)


def trig_potential(x, y):
    return np.stack([SQ2 * np.sin(np.pi * x) * np.cos(np.pi * y),
                     -SQ2 * np.cos(np.pi * x) * np.sin(np.pi * y)], -1)


def zero_potential(x, y):
    return np.zeros(np.shape(x) + (2,))


def element_data(space, rule_points, rule_weights):
    """Yield (dofs, physical points, weights, phi, grad phi) element by element."""
    m = space.mesh
    phi_ref, dphi_ref = lagrange_basis(space.degree, rule_points)
    for k, tri in enumerate(m.elements):
        v = m.vertices[tri]
        B = np.column_stack([v[1] - v[0], v[2] - v[0]])
        det = np.linalg.det(B)
        pts = rule_points @ B.T + v[0]
        grads = dphi_ref @ np.linalg.inv(B)
        yield space.element_dofs[k], pts, abs(det) * rule_weights, phi_ref, grads


def dense_energy(space, c, kappa, pot, points, weights):
    E = 0.0
    for dofs, pts, w, phi, grads in element_data(space, points, weights):
        u = phi @ c[dofs]
        gu = np.einsum("qn,qna->qa", np.broadcast_to(c[dofs], phi.shape), grads)
        A = pot(pts[:, 0], pts[:, 1])
        kin = (1j / kappa) * gu + A * u[:, None]
        E += 0.5 * np.sum(w * np.sum(np.abs(kin) ** 2, axis=1))
        E += 0.25 * np.sum(w * (np.abs(u) ** 2 - 1) ** 2)
    return E


def dense_hessian(space, c, kappa, pot, points, weights):
    """Real 2N x 2N matrix with entries <E''(u) z, w> for z, w in {phi_k, i phi_k}."""
    n = space.dof_count
    H = np.zeros((2 * n, 2 * n))
    for dofs, pts, w, phi, grads in element_data(space, points, weights):
        u = phi @ c[dofs]
        A = pot(pts[:, 0], pts[:, 1])
        nloc = len(dofs)
        for a in range(nloc):
            for b in range(nloc):
                for sz, oz in ((1.0, 0), (1j, n)):
                    for sw, ow in ((1.0, 0), (1j, n)):
                        z, gz = sz * phi[:, b], sz * grads[:, b]
                        v, gv = sw * phi[:, a], sw * grads[:, a]
                        kz = (1j / kappa) * gz + A * z[:, None]
                        kv = (1j / kappa) * gv + A * v[:, None]
                        val = np.sum(w * np.real(np.sum(kz * np.conj(kv), axis=1)))
                        nl = (2 * np.abs(u) ** 2 - 1) * z + u**2 * np.conj(z)
                        val += np.sum(w * np.real(nl * np.conj(v)))
                        H[ow + dofs[a], oz + dofs[b]] += val
    return H


def dense_xz(space, z, kappa, pot, points, weights):
    n = space.dof_count
    M = np.zeros((n, n), dtype=complex)
    rhs = np.zeros(n, dtype=complex)
    for dofs, pts, w, phi, grads in element_data(space, points, weights):
        zq = phi @ z[dofs]
        A = pot(pts[:, 0], pts[:, 1])
        A2 = np.sum(A**2, axis=1)
        for a in range(len(dofs)):
            kv = (1j / kappa) * grads[:, a] + A * phi[:, a][:, None]
            rhs[dofs[a]] += np.sum(w * (1 + A2) * zq * phi[:, a])
            for b in range(len(dofs)):
                kz = (1j / kappa) * grads[:, b] + A * phi[:, b][:, None]
                val = np.sum(w * np.sum(kz * np.conj(kv), axis=1))
                val += np.sum(w * (np.abs(zq) ** 2 + A2) * phi[:, b] * phi[:, a])
                M[dofs[a], dofs[b]] += val
    return M, rhs


def collapsed_gauss(n):
    """Duffy-collapsed Gauss-Legendre rule on the reference triangle."""
    t, wt = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (t + 1)
    wt = 0.5 * wt
    U, V = np.meshgrid(t, t, indexing="ij")
    WU, WV = np.meshgrid(wt, wt, indexing="ij")
    x = U * (1 - V)
    y = V
    w = WU * WV * (1 - V)
    return np.column_stack([x.ravel(), y.ravel()]), w.ravel()
