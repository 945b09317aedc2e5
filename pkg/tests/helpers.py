"""Shared test utilities: random space generators and independent oracles.

The oracles deliberately avoid the library's solution paths: the
minimal-decomposition oracle recovers the norm from raw function values
by a least-squares solve, and the fusion oracle optimizes the objective
by grid search with refinement.  Both exist so library results can be
checked against an implementation that shares no code with them.
"""

import numpy as np

from kernelfusion import (
    FeatureSet,
    build_fusion_basis,
    cosine,
    exponential,
    monomial,
    sine,
)
from kernelfusion.exceptions import ConstructionError, IndependenceError

BOX = ((-2.0, 2.0),)


def random_primitive(rng):
    kind = rng.choice(("monomial", "exp", "sin", "cos"))
    if kind == "monomial":
        return monomial(int(rng.integers(0, 6)))
    param = float(rng.uniform(0.3, 1.5) * rng.choice((-1.0, 1.0)))
    if kind == "exp":
        return exponential(param)
    if kind == "sin":
        return sine(param)
    return cosine(param)


def random_feature_set(rng, max_size=4, box=BOX):
    """A random independent feature set; retries draws that collide."""
    for _ in range(50):
        size = int(rng.integers(1, max_size + 1))
        feats = []
        seen = set()
        for _ in range(size):
            p = random_primitive(rng)
            if (p.kind, p.param) in seen:
                continue
            seen.add((p.kind, p.param))
            feats.append(p)
        if not feats:
            continue
        try:
            return FeatureSet(tuple(feats), input_dim=1, domain_box=box)
        except IndependenceError:
            continue
    raise RuntimeError("could not draw an independent feature set")


def identifiable_sample(rng, min_sigma=0.05, max_size=4, box=BOX):
    """A feature set plus sample points that pin down every coefficient.

    Coefficient recovery at a tiny ridge is only meaningful when the
    design matrix is far from rank deficiency, so draws whose smallest
    design singular value falls below ``min_sigma`` are rejected.
    """
    lo, hi = box[0]
    for _ in range(200):
        fs = random_feature_set(rng, max_size=max_size, box=box)
        xs = rng.uniform(lo, hi, fs.size * 4 + 4)
        E = fs.design_matrix(xs)
        if np.linalg.svd(E, compute_uv=False)[-1] >= min_sigma:
            return fs, xs
    raise RuntimeError("could not draw an identifiable sample")


def random_agent_pair(rng, box=BOX):
    """Two random agent spaces plus their fusion basis."""
    for _ in range(50):
        fs1 = random_feature_set(rng, box=box)
        fs2 = random_feature_set(rng, box=box)
        try:
            return fs1, fs2, build_fusion_basis(fs1, fs2)
        except ConstructionError:
            continue
    raise RuntimeError("could not build a fusion basis from random spaces")


def minimal_decomposition_norm(fs1, fs2, func, n_probes=120):
    """Oracle for the combined-space squared norm of a function.

    Uses only function values: evaluates ``func`` and all raw features
    at probe points and takes the minimum-norm coefficient solve.  The
    squared norm of that coefficient vector is the minimum of
    ``|f1|^2 + |f2|^2`` over all exact splittings, because splittings
    correspond one-to-one to raw coefficient vectors reproducing the
    values.
    """
    lo, hi = fs1.domain_box[0]
    probes = np.linspace(lo, hi, n_probes).reshape(-1, 1)
    E = np.hstack([fs1.design_matrix(probes), fs2.design_matrix(probes)])
    v = func(probes)
    gamma, residuals, rank, svals = np.linalg.lstsq(E, v, rcond=None)
    # the solve must be consistent: func lies in the span by construction
    assert np.linalg.norm(E @ gamma - v) <= 1e-8 * (1 + np.linalg.norm(v))
    return float(np.dot(gamma, gamma))


def _objective_grid(p, q, g11, g12, g22, ridge, A, B):
    """Fusion objective evaluated from its definition on weight arrays."""
    sp = np.sum(p * p)
    sq = np.sum(q * q)
    spq = np.sum(p * q)
    # sum_k ((a-1) p_k + b q_k)^2 + (a p_k + (b-1) q_k)^2
    d1 = (A - 1) ** 2 * sp + 2 * (A - 1) * B * spq + B ** 2 * sq
    d2 = A ** 2 * sp + 2 * A * (B - 1) * spq + (B - 1) ** 2 * sq
    pen = ridge * (A ** 2 * g11 + 2 * A * B * g12 + B ** 2 * g22)
    return d1 + d2 + pen


def brute_force_fuse(f1, f2, refs, ridge, span=3.0, step=0.01):
    """Grid search over weights with tie-breaking and local refinement.

    Scans ``[-span, span]^2``, collects the near-optimal set, picks its
    minimum-norm member, and (when the optimum is isolated) refines by
    two zoomed grids plus one finite-difference Newton step, which is
    exact for a quadratic objective.  Returns ``(a, b, degenerate)``
    with ``degenerate`` set when the near-optimal set is spread out.
    """
    B_mat = np.vstack([v.coeffs for v in refs.vectors])
    p = B_mat @ f1.coeffs
    q = B_mat @ f2.coeffs
    g11 = float(np.dot(f1.coeffs, f1.coeffs))
    g12 = float(np.dot(f1.coeffs, f2.coeffs))
    g22 = float(np.dot(f2.coeffs, f2.coeffs))

    def J(A, B):
        return _objective_grid(p, q, g11, g12, g22, ridge, A, B)

    n = int(round(2 * span / step)) + 1
    axis = np.linspace(-span, span, n)
    A, B = np.meshgrid(axis, axis, indexing="ij")
    vals = J(A, B)
    jmin = float(vals.min())
    ties = vals <= jmin + 1e-9 * (1.0 + abs(jmin))
    ta, tb = A[ties], B[ties]
    norms = ta ** 2 + tb ** 2
    k = int(np.argmin(norms))
    a0, b0 = float(ta[k]), float(tb[k])
    spread = max(ta.max() - ta.min(), tb.max() - tb.min())
    degenerate = bool(spread > 2.5 * step)
    if degenerate:
        return a0, b0, True

    h = step
    for _ in range(2):
        h = h / 50.0
        ax = np.linspace(a0 - 60 * h, a0 + 60 * h, 121)
        bx = np.linspace(b0 - 60 * h, b0 + 60 * h, 121)
        A, B = np.meshgrid(ax, bx, indexing="ij")
        vals = J(A, B)
        k = int(np.argmin(vals))
        a0, b0 = float(A.flat[k]), float(B.flat[k])

    # Newton steps from central differences; each is exact on a quadratic
    # up to round-off in the finite-difference Hessian, so iterating
    # contracts the error even when the optimum sits beyond the grid
    d = 1e-4
    for _ in range(4):
        ga = (J(a0 + d, b0) - J(a0 - d, b0)) / (2 * d)
        gb = (J(a0, b0 + d) - J(a0, b0 - d)) / (2 * d)
        haa = (J(a0 + d, b0) - 2 * J(a0, b0) + J(a0 - d, b0)) / d ** 2
        hbb = (J(a0, b0 + d) - 2 * J(a0, b0) + J(a0, b0 - d)) / d ** 2
        hab = (J(a0 + d, b0 + d) - J(a0 + d, b0 - d)
               - J(a0 - d, b0 + d) + J(a0 - d, b0 - d)) / (4 * d ** 2)
        H = np.array([[haa, hab], [hab, hbb]])
        if np.linalg.det(H) <= 1e-12 * (abs(haa) + abs(hbb)) ** 2:
            break
        sol = np.linalg.solve(H, np.array([ga, gb]))
        a0, b0 = a0 - float(sol[0]), b0 - float(sol[1])
        if abs(sol[0]) + abs(sol[1]) < 1e-12 * (1 + abs(a0) + abs(b0)):
            break
    return a0, b0, False
