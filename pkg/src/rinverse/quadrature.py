"""Adaptive composite Gauss-Legendre quadrature over many intervals at once.

Every integration problem in a batch owns its own list of panels on the unit
interval.  Each panel carries a Gauss-Legendre value over the whole panel and
over its two halves; the difference is the panel's error estimate.  In every
sweep each unconverged problem bisects its worst panel, and all new panels of
all problems are evaluated in one vectorized integrand call.  Refinement of a
problem depends only on its own panels, so results are deterministic per
problem and do not depend on how problems are batched.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np


class QuadratureError(RuntimeError):
    """Refinement hit the depth limit before reaching the tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class QuadratureConfig:
    order: int = 8
    panels: int = 4
    tol: float = 1e-10
    max_depth: int = 20

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("quadrature tolerance must be positive")
        if self.order < 1 or self.panels < 1 or self.max_depth < 0:
            raise ValueError("order and panels must be >= 1, max_depth >= 0")

    def tightened(self, factor: float) -> "QuadratureConfig":
        return QuadratureConfig(self.order, self.panels, self.tol / factor, self.max_depth)

    def to_dict(self) -> dict:
        return {"order": self.order, "panels": self.panels, "tol": self.tol,
                "max_depth": self.max_depth}


@functools.lru_cache(maxsize=None)
def _rule(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1) / 2, w / 2


def _panel_nodes(a, b, order, halves_only=False):
    """Nodes of the whole panel (unless ``halves_only``) then of both halves."""
    x, _ = _rule(order)
    mid = (a + b) / 2
    left = a[:, None] + (mid - a)[:, None] * x
    right = mid[:, None] + (b - mid)[:, None] * x
    parts = [left, right] if halves_only else [a[:, None] + (b - a)[:, None] * x, left, right]
    return np.concatenate(parts, axis=1)


def integrate_unit(integrand, count: int, config: QuadratureConfig = QuadratureConfig(),
                   scale=None):
    """Integrate ``count`` vector-valued functions over [0, 1].

    ``integrand(owner, s)`` receives problem indices ``owner`` (shape ``(P,)``)
    and nodes ``s`` (shape ``(P, q)``) and returns values of shape
    ``(P, q, N)``.  ``scale`` (shape ``(count,)``) multiplies each problem's
    result and error estimate; it is how interval length enters the tolerance.

    Returns an array of shape ``(count, N)``.
    """
    q = config.order
    _, w = _rule(q)
    scale = np.ones(count) if scale is None else np.abs(np.asarray(scale, dtype=float))

    edges = np.linspace(0.0, 1.0, config.panels + 1)
    owner = np.repeat(np.arange(count), config.panels)
    a = np.tile(edges[:-1], count)
    b = np.tile(edges[1:], count)
    depth = np.zeros(owner.shape, dtype=int)

    vals = integrand(owner, _panel_nodes(a, b, q))
    width = (b - a)[:, None]
    whole = np.einsum("pqn,q->pn", vals[:, :q], w) * width
    left = np.einsum("pqn,q->pn", vals[:, q:2 * q], w) * width / 2
    right = np.einsum("pqn,q->pn", vals[:, 2 * q:], w) * width / 2

    while True:
        err = np.max(np.abs(whole - left - right), axis=1) * scale[owner]
        total = np.bincount(owner, weights=err, minlength=count)
        magnitude = np.bincount(owner, weights=np.max(np.abs(left) + np.abs(right), axis=1),
                                minlength=count) * scale
        # floor at the rounding level of the accumulated value
        target = np.maximum(config.tol, 64 * np.finfo(float).eps * magnitude)
        open_ = total > target
        if not np.any(open_):
            break
        # worst panel of every open problem
        order = np.lexsort((-err, owner))
        first = order[np.unique(owner[order], return_index=True)[1]]
        worst = first[open_[owner[first]]]
        stuck = depth[worst] >= config.max_depth
        if np.any(stuck):
            bad = owner[worst[stuck]]
            raise QuadratureError(
                f"quadrature did not converge to {config.tol:g} within depth "
                f"{config.max_depth}; achieved estimate {total[bad].max():.3g}",
                estimate=total[bad].max(),
            )
        pa, pb = a[worst], b[worst]
        mid = (pa + pb) / 2
        na = np.concatenate([pa, mid])
        nb = np.concatenate([mid, pb])
        nowner = np.concatenate([owner[worst], owner[worst]])
        ndepth = np.concatenate([depth[worst], depth[worst]]) + 1
        nwhole = np.concatenate([left[worst], right[worst]])
        nvals = integrand(nowner, _panel_nodes(na, nb, q, halves_only=True))
        nwidth = (nb - na)[:, None]
        nleft = np.einsum("pqn,q->pn", nvals[:, :q], w) * nwidth / 2
        nright = np.einsum("pqn,q->pn", nvals[:, q:], w) * nwidth / 2

        keep = np.ones(owner.shape, dtype=bool)
        keep[worst] = False
        owner = np.concatenate([owner[keep], nowner])
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        depth = np.concatenate([depth[keep], ndepth])
        whole = np.concatenate([whole[keep], nwhole])
        left = np.concatenate([left[keep], nleft])
        right = np.concatenate([right[keep], nright])

    # sum panels in a fixed (owner, position) order for reproducibility
    order = np.lexsort((a, owner))
    contrib = (left + right)[order]
    out = np.zeros((count, contrib.shape[1]), dtype=contrib.dtype)
    np.add.at(out, owner[order], contrib)
    return out * scale[:, None]
