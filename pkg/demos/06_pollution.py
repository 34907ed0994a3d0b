"""
Pollution at large kappa
========================

For kappa = 32 coarse P1 minimizers are far worse than the best
approximation of the reference from the same space, while at kappa = 8
the two stay within a small factor.  The kappa = 32 reference takes a few
minutes.
"""
from glfem.gl_model import ModelParams, potential
from glfem.study import compute_reference, run_study

for kappa, ref_level, levels in ((8.0, 6, [3, 4, 5]), (32.0, 7, [4, 5])):
    mp = ModelParams(kappa, potential("paper_trig"))
    ref = compute_reference(mp, ref_level)
    rows = run_study([kappa], [1], levels, ref_level, references={kappa: ref})
    print(f"kappa={kappa:g} (reference E={ref.energy:.8f}, level {ref_level})")
    for r in rows:
        print(f"  level {r.level}: L2 error {r.l2_err:.3e}, best approx {r.ba_l2_err:.3e},"
              f" ratio {r.l2_err / r.ba_l2_err:.2f}")
