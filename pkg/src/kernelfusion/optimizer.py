"""Closed-form fusion of two uploaded estimates.

Given estimates ``f1`` and ``f2`` in the combined space, find scalars
``a, b`` minimizing

    d(a f1 + b f2, f1) + d(a f1 + b f2, f2) + ridge * |a f1 + b f2|^2

where ``d`` is the squared-pairing dissimilarity against a finite
family of reference functions.  The objective is quadratic in
``(a, b)``; with ``p_k = <f1, b_k>`` and ``q_k = <f2, b_k>`` the
stationarity condition is the symmetric 2x2 system

    (2 S + ridge * G) u = S 1,   S = [[sum p^2, sum pq], [sum pq, sum q^2]]

with ``G`` the Gram matrix of ``(f1, f2)`` in the combined space.  A
singular system (parallel estimates, or references that do not separate
them) is resolved by the minimum-norm solution and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BindingError
from .fusion import FusionBasis, FusionFunction, _same_basis, h_inner_product
from .validation import check_nonnegative


@dataclass(frozen=True, eq=False)
class DissimilarityBasis:
    """A finite family of reference functions for comparing estimates.

    The family should span the combined space for the dissimilarity to
    separate all pairs; the achieved rank of the stacked coefficient
    vectors is computed at construction and exposed as
    ``spanning_rank`` / ``is_spanning`` rather than assumed.
    """

    vectors: tuple
    source: dict

    def __post_init__(self):
        vecs = tuple(self.vectors)
        if not vecs:
            raise ValueError("a dissimilarity basis needs at least one function")
        if not all(isinstance(v, FusionFunction) for v in vecs):
            raise TypeError("all reference functions must be fusion functions")
        base = vecs[0].basis
        if not all(_same_basis(v.basis, base) for v in vecs[1:]):
            raise BindingError("reference functions are bound to different bases")
        object.__setattr__(self, "vectors", vecs)
        stacked = np.vstack([v.coeffs for v in vecs])
        svals = np.linalg.svd(stacked, compute_uv=False)
        cutoff = 1e-10 * svals[0] if svals[0] > 0 else 0.0
        rank = int(np.sum(svals > cutoff))
        object.__setattr__(self, "spanning_rank", rank)
        object.__setattr__(self, "is_spanning", rank == base.rank)

    @property
    def fusion_basis(self) -> FusionBasis:
        return self.vectors[0].basis

    def __len__(self):
        return len(self.vectors)


def kernel_section_basis(
    basis: FusionBasis, count=40, anchor_range=None, seed=0
) -> DissimilarityBasis:
    """Reference family of kernel sections at randomly sampled anchors.

    Anchors are drawn uniformly from ``anchor_range`` (default: the
    domain box) with a fixed seed, so the family is reproducible.
    """
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    if anchor_range is None:
        box = basis.domain_box
    elif np.ndim(anchor_range[0]) == 0 and basis.input_dim == 1:
        box = (tuple(anchor_range),)
    else:
        box = tuple(tuple(iv) for iv in anchor_range)
    rng = np.random.default_rng(seed)
    lows = np.array([lo for lo, _ in box], dtype=float)
    highs = np.array([hi for _, hi in box], dtype=float)
    anchors = rng.uniform(lows, highs, size=(count, basis.input_dim))
    vectors = tuple(basis.section(anchors[k]) for k in range(count))
    source = {
        "kind": "kernel_sections",
        "count": count,
        "anchor_range": [[float(lo), float(hi)] for lo, hi in box],
        "seed": int(seed),
    }
    return DissimilarityBasis(vectors=vectors, source=source)


@dataclass(frozen=True, eq=False)
class FusionResult:
    """Optimal combination weights and the fused estimate.

    ``degenerate`` is set when the 2x2 stationarity system was singular
    and the minimum-norm tie-break chose among equally good solutions.
    """

    a: float
    b: float
    fused: FusionFunction
    objective: float
    degenerate: bool


def _pairings(f1: FusionFunction, f2: FusionFunction, refs: DissimilarityBasis):
    if not (_same_basis(f1.basis, f2.basis)
            and _same_basis(f1.basis, refs.fusion_basis)):
        raise BindingError("estimates and reference family use different bases")
    B = np.vstack([v.coeffs for v in refs.vectors])
    return B @ f1.coeffs, B @ f2.coeffs


def dissimilarity(f: FusionFunction, g: FusionFunction, refs: DissimilarityBasis):
    """Sum of squared pairings of ``f - g`` against the reference family.

    Symmetric in ``f, g``; zero exactly when ``f = g`` provided the
    family spans the space.
    """
    p, q = _pairings(f, g, refs)
    d = p - q
    return float(np.dot(d, d))


def fusion_objective(
    f1: FusionFunction, f2: FusionFunction, refs: DissimilarityBasis,
    ridge, a, b,
):
    """Objective value at combination weights ``(a, b)``."""
    check_nonnegative(ridge, "ridge")
    fused = a * f1 + b * f2
    return (
        dissimilarity(fused, f1, refs)
        + dissimilarity(fused, f2, refs)
        + float(ridge) * h_inner_product(fused, fused)
    )


def fuse(
    f1: FusionFunction, f2: FusionFunction, refs: DissimilarityBasis,
    ridge=1e-6,
) -> FusionResult:
    """Minimize the fusion objective over combination weights.

    Solves the stationarity system ``(2 S + ridge * G) u = S 1``; when
    the system is singular every solution of it is a minimizer of the
    (convex quadratic) objective, and the minimum-norm one is returned
    with ``degenerate=True``.
    """
    check_nonnegative(ridge, "ridge")
    ridge = float(ridge)
    p, q = _pairings(f1, f2, refs)
    S = np.array([
        [np.dot(p, p), np.dot(p, q)],
        [np.dot(p, q), np.dot(q, q)],
    ])
    G = np.array([
        [h_inner_product(f1, f1), h_inner_product(f1, f2)],
        [h_inner_product(f1, f2), h_inner_product(f2, f2)],
    ])
    A = 2.0 * S + ridge * G
    rhs = S @ np.ones(2)
    u, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    a, b = float(u[0]), float(u[1])
    fused = a * f1 + b * f2
    return FusionResult(
        a=a,
        b=b,
        fused=fused,
        objective=fusion_objective(f1, f2, refs, ridge, a, b),
        degenerate=bool(rank < 2),
    )
