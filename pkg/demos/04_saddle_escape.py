"""
Leaving a saddle point
======================

Without a magnetic field the normal state u = 0 is a critical point with
negative curvature once kappa is large.  The verification step detects
this and an exact quartic line search along the offending eigenvector
moves the state into a descent region.
"""
import numpy as np

from glfem.fe_space import ComplexField, build_space
from glfem.gl_model import ModelParams, assemble_energy, potential
from glfem.mesh import build_uniform
from glfem.optimizer import SolverConfig, classify, ncg_minimize, saddle_escape, verify_minimizer

s = build_space(build_uniform(3), 1)
mp = ModelParams(20.0, potential("zero"))
u = ComplexField(s, np.zeros(s.dof_count))

# %%
rep = verify_minimizer(u, mp)
print("lambda =", rep.eigenvalues, "->", classify(rep))

# %%
v = saddle_escape(u, rep.eigenvectors[:, 0], mp)
print(f"energy {assemble_energy(u, mp):.6f} -> {assemble_energy(v, mp):.6f}")

# %%
# From there the solver reaches the superconducting state |u| = 1.
res = ncg_minimize(s, mp, SolverConfig(), u0=v)
print(f"E = {res.energy:.2e}, status {res.status}, min |u| = {np.abs(res.state.coefficients).min():.6f}")
