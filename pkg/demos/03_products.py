"""Right inverses of higher-order operators by chaining first-order ones.

(D_2 - 1)(D_2 - 2) on K1 is factored numerically, and the two first-order
inverses are composed.  The mixed operator D_1 (D_2 - i) needs K1 described
twice, once with horizontal fibers and once with vertical ones.
"""

import time

import numpy as np

from rinverse import OperatorProduct, build_product_inverse, evaluate, fixture, parse, sample_set
from rinverse.geometry import k1_presentations

F = parse("(mul (var 1) (var 2))")
K1_e1, K1_e2 = k1_presentations(21)
pts = sample_set(K1_e2, 10).points

start = time.perf_counter()
P = OperatorProduct((([0, 1], [2, -3, 1]),))  # ascending coefficients of t^2 - 3t + 2
S = build_product_inverse([K1_e2], P)
print("roots:", [complex(s.lam) for s in S.stages])
print(f"(D2-1)(D2-2): max residual {S.residual(F, pts).max():.2e}  ({time.perf_counter() - start:.1f}s)")

start = time.perf_counter()
Q = OperatorProduct((([1, 0], [0, 1]), ([0, 1], [-1j, 1])))
S = build_product_inverse([K1_e1, K1_e2], Q)
print(f"D1 (D2 - i): max residual {S.residual(F, pts).max():.2e}  ({time.perf_counter() - start:.1f}s)")
print("the horizontal presentation has a tabulated lower bound and surface x1 = 1:")
print("  ", S.stages[0].provenance["stages"][1])
