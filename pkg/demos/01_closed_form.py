"""Integrate the constant 1 along the fibers of K1 and compare with closed forms.

K1 = {0 <= x1 <= 1, 0 <= x2 <= exp(-1/x1)} has vertical fibers starting on
the x1-axis.  Solving (D_2 - lam) u = 1 with u = 0 on the axis gives
u = x2 for lam = 0 and (exp(lam x2) - 1) / lam otherwise.
"""

import numpy as np

from rinverse import DirectionalOperator, build_right_inverse, fixture, parse, sample_set

K1 = fixture("K1", 21)
cloud = sample_set(K1, 10)
t = cloud.points[:, 1]
print(f"K1 sampled at {len(cloud)} points; tallest fiber reaches x2 = {t.max():.4f}")

for lam in (0.0, 1.0, 1j):
    S = build_right_inverse(K1, DirectionalOperator([0, 1], lam))
    u = S.apply(parse("(const 1)"), cloud.points, 0).value
    exact = t if lam == 0 else np.expm1(lam * t) / lam
    print(f"lam = {lam!s:>4}: max |S1 - closed form| = {np.max(np.abs(u - exact)):.2e}")

# The operator K1 sees is a permutation (fibers along e2 become fibers along
# e1) followed by the integral; the flattening shift is skipped.
for stage in S.provenance["stages"]:
    print(f"  stage {stage['stage']:9s} kind={stage.get('kind', '-')}, skipped={stage.get('skipped', False)}")
