"""
Meshes, Lagrange spaces and quasi-interpolation
===============================================

Uniform criss meshes of the unit square, P1/P2 spaces on them, nested
prolongation and the Oswald quasi-interpolant built from element-wise
H1 projections.
"""
import numpy as np

from glfem.fe_space import (
    build_space, evaluate, l2_norm, nodal_interpolate, oswald_interpolate, prolongate,
)
from glfem.mesh import build_uniform, patch_sizes, refine

# %%
# Level l has 2 * 4**l triangles and (2**l + 1)**2 vertices.
for level in range(4):
    m = build_uniform(level)
    print(f"level {level}: {len(m.elements):4d} elements, {len(m.vertices):3d} vertices, h={m.cell_size}")

m = build_uniform(3)
print("largest element patch:", patch_sizes(m).max(), "elements")

# %%
# P2 spaces add one dof per edge midpoint.
for p in (1, 2):
    s = build_space(m, p)
    print(f"P{p} on level 3: N={s.dof_count}")

# %%
# A coarse field is the same function after prolongation to a refined mesh.
coarse = build_space(build_uniform(2), 2)
fine = build_space(refine(coarse.mesh), 2)
u = nodal_interpolate(lambda x, y: np.exp(1j * np.pi * x) * y**2, coarse)
v = prolongate(u, fine)
pts = np.random.default_rng(0).uniform(0, 1, (5, 2))
print("max pointwise mismatch:", np.abs(evaluate(coarse, u.coefficients, pts)
                                        - evaluate(fine, v.coefficients, pts)).max())

# %%
# The Oswald operator reproduces FE functions and converges at order p + 1
# in L2 for smooth data.
f = lambda x, y: np.sin(2 * x) * np.cos(3 * y) + 1j * x * y  # noqa: E731
grad_f = lambda x, y: (2 * np.cos(2 * x) * np.cos(3 * y) + 1j * y,  # noqa: E731
                      -3 * np.sin(2 * x) * np.sin(3 * y) + 1j * x)
for p in (1, 2):
    errs = []
    for level in (2, 3, 4, 5):
        s = build_space(build_uniform(level), p)
        Iu = oswald_interpolate(f, grad_f, s)
        ref = build_space(build_uniform(level + 1), p)
        e = nodal_interpolate(f, ref).coefficients - prolongate(Iu, ref).coefficients
        errs.append(l2_norm(ref, e))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    print(f"P{p} Oswald L2 errors {np.array(errs)}  rates {np.round(rates, 2)}")
