"""
The energy and its derivatives
==============================

Closed-form energies, finite-difference checks of the residual and the
Hessian, and the gauge invariance that makes ``i u`` a null direction.
"""
import numpy as np

from glfem.fe_space import ComplexField, build_space, to_real
from glfem.gl_model import (
    ModelParams, assemble_energy, assemble_gradient, assemble_hessian, potential,
)
from glfem.mesh import build_uniform

s = build_space(build_uniform(4), 2)
mp = ModelParams(8.0, potential("paper_trig"))

# %%
# E(0) = 1/4 exactly and E(1) = 1/2 for the trigonometric potential.
zero = ComplexField(s, np.zeros(s.dof_count))
one = ComplexField(s, np.ones(s.dof_count))
print("E(0) =", assemble_energy(zero, mp), "  E(1) =", assemble_energy(one, mp))

# %%
# Directional derivatives against central differences.
rng = np.random.default_rng(1)
c = 0.6 * (rng.standard_normal(s.dof_count) + 1j * rng.standard_normal(s.dof_count))
v = 0.6 * (rng.standard_normal(s.dof_count) + 1j * rng.standard_normal(s.dof_count))
u = ComplexField(s, c)
t = 1e-5
fd = (assemble_energy(ComplexField(s, c + t * v), mp)
      - assemble_energy(ComplexField(s, c - t * v), mp)) / (2 * t)
an = np.vdot(v, assemble_gradient(u, mp)).real
print(f"<E'(u), v>: analytic {an:.12f}  finite difference {fd:.12f}")

H = assemble_hessian(u, mp)
fd_g = (assemble_gradient(ComplexField(s, c + t * v), mp)
        - assemble_gradient(ComplexField(s, c - t * v), mp)) / (2 * t)
print("relative Hessian FD mismatch:",
      np.linalg.norm(to_real(fd_g) - H @ to_real(v)) / np.linalg.norm(H @ to_real(v)))

# %%
# A global phase leaves the energy unchanged.
for omega in (0.3, 1.7, -2.5):
    print(f"E(exp({omega}i) u) - E(u) = {assemble_energy(u * np.exp(1j * omega), mp) - assemble_energy(u, mp):.2e}")
