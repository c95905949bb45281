"""
Checking the convergence bound numerically
==========================================

With the weights frozen, the loss is convex in the relaxed mask values.
SGD on the mask logits should then close the gap to the best achievable
loss at least as fast as the bound ``1/(c sqrt T) + c G^2 (1+C)(1+ln T)/T``
predicts.
"""

from archprune.optimizer import ConvexInstance, TwoTempConfig, empirical_bound_check, reference_minimum

instance = ConvexInstance.random(dim=5, seed=0)
loss_star, v_star = reference_minimum(instance, steps=100_000)
print(f"best loss over the box: {loss_star:.6f} at v = {v_star.round(3)}")

cfg = TwoTempConfig(t_l=10, t_s=5, c=0.5, eps_w=0.1)
for T in (10, 100, 1000):
    rep = empirical_bound_check(instance, cfg.replace(T=T), n_seeds=20, loss_star=loss_star)
    print(f"T={T:<5} mean gap {rep.gap:.5f}  bound {rep.bound:.5f}  (G={rep.G:.3f}, M={rep.M:.3f}, C={rep.C:.3f})")
