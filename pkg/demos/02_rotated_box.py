"""Right inverse on a tilted square whose fibers start on a wavy curve.

The direction v = (1,1)/sqrt2 is not a coordinate axis, so the construction
rotates v onto e1, shifts the wavy surface 0.2 sin(sqrt2 (x2 - x1)) flat,
integrates along the first axis and undoes both maps.
"""

import numpy as np

from rinverse import (
    DirectionalOperator,
    apply_operator,
    build_right_inverse,
    evaluate,
    fixture,
    parse,
    sample_set,
)

box = fixture("box", 21)
cloud = sample_set(box, 10)
lam = 2 + 1j
op = DirectionalOperator(box.direction, lam)
S = build_right_inverse(box, op)

print("stages:")
for stage in S.provenance["stages"]:
    print(f"  {stage['stage']:9s} {stage.get('kind', '')}")

F = parse("(mul (exp (var 1)) (sin (var 2)))")
u = S.expression(F)
residual = np.abs(apply_operator(op, u, cloud.points).value - evaluate(F, cloud.points))
print(f"max |(D_v - lam) S F - F| over {len(cloud)} points: {residual.max():.2e}")

# S F vanishes on the surface: the fiber integral starts there.
surface = box.base_samples + np.outer(box.surface_values(), box.direction)
print(f"max |S F| on the surface: {np.max(np.abs(evaluate(u, surface))):.2e}")
