"""
Relaxing a binary mask with two temperatures
=============================================

A hard mask ``m = 1[w > 0]`` has no useful gradient.  Replacing it with
``sigmoid(t w)`` gives one, and the temperature ``t`` trades fidelity for
gradient signal.  This script walks through the pieces on a toy vector.
"""

import numpy as np

from archprune import bound_constant_C, g_max, harden_mask, relax_mask, two_temp_grad

np.set_printoptions(precision=4, suppress=True)

w = np.array([-0.3, -0.01, 0.0, 0.002, 0.05, 0.4])

# A tight relaxation (large t) is already almost binary ...
for t in (1.0, 10.0, 100.0, 1000.0):
    print(f"t={t:>6g}  v={relax_mask(w, t)}")
print("hard mask        ", harden_mask(w))

# ... but its slope vanishes almost everywhere, so a tight forward pass
# alone learns nothing.  The two-temperature trick keeps the tight
# relaxation in the forward pass and borrows the slope of a looser one.
grad_v = np.ones_like(w)
for t_s in (1000.0, 10.0, 1.0):
    print(f"t_s={t_s:>6g}  dL/dw={two_temp_grad(grad_v, w, t_s)}")

# The price is a mismatch between the two sigmoids, measured by the
# constant C that enters the convergence bound.  It vanishes for t_l = t_s = 4
# at M = 0 and grows quickly as the temperatures separate.
for t_l, t_s in [(4, 4), (1, 1), (100, 10), (1000, 10)]:
    print(f"t_l={t_l:<5} t_s={t_s:<3} C(M=0)={bound_constant_C(t_l, t_s, 0.0):.4g}  "
          f"g_max(t_s, M=0.1)={g_max(t_s, 0.1):.4g}")
