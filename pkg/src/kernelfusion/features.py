"""Symbolic feature primitives and finite-dimensional agent function spaces.

Each agent works in the span of a finite, ordered list of feature
functions over a box domain.  The span carries the coefficient inner
product ``<f, g> = sum_j alpha_j * beta_j`` (the features are declared
orthonormal by fiat), which makes it a reproducing kernel Hilbert space
with kernel ``K(x, y) = sum_j phi_j(x) * phi_j(y)``.

All types are immutable after construction and every operation is a
pure function, so instances can be shared freely across threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import InitVar, dataclass
from typing import Sequence

import numpy as np

from .exceptions import BindingError, IndependenceError
from .validation import as_float_array, as_point_matrix, as_output_vector

FEATURE_KINDS = ("monomial", "exp", "sin", "cos")

#: Relative singular-value cutoff for the numerical independence check.
INDEPENDENCE_TOL = 1e-10


@dataclass(frozen=True)
class FeaturePrimitive:
    """One univariate factor of a feature.

    ``monomial`` evaluates ``t**param`` (param a nonnegative integer),
    ``exp`` evaluates ``exp(param * t)``, and ``sin``/``cos`` evaluate
    ``sin(param * t)`` / ``cos(param * t)``.
    """

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        p = float(self.param)
        if not math.isfinite(p):
            raise ValueError("feature parameter must be finite")
        if self.kind == "monomial" and (p < 0 or p != int(p)):
            raise ValueError(f"monomial power must be a nonnegative integer, got {p}")
        object.__setattr__(self, "param", p)

    def profile(self, t):
        """Evaluate the univariate factor on an array of scalars."""
        t = np.asarray(t, dtype=float)
        if self.kind == "monomial":
            return t ** int(self.param)
        if self.kind == "exp":
            return np.exp(self.param * t)
        if self.kind == "sin":
            return np.sin(self.param * t)
        return np.cos(self.param * t)


#: A feature on R^d: the product of one primitive per input coordinate.
Feature = tuple  # tuple[FeaturePrimitive, ...]


def monomial(power):
    return FeaturePrimitive("monomial", power)


def exponential(rate):
    return FeaturePrimitive("exp", rate)


def sine(freq):
    return FeaturePrimitive("sin", freq)


def cosine(freq):
    return FeaturePrimitive("cos", freq)


def _as_feature(obj, input_dim) -> Feature:
    if isinstance(obj, FeaturePrimitive):
        feature = (obj,)
    else:
        feature = tuple(obj)
        if not all(isinstance(p, FeaturePrimitive) for p in feature):
            raise TypeError("a feature must be a FeaturePrimitive or a tuple of them")
    if len(feature) != input_dim:
        raise ValueError(
            f"feature has {len(feature)} factors but input dimension is {input_dim}"
        )
    return feature


def eval_feature(feature, x):
    """Evaluate one feature (product of per-coordinate factors) at ``x``.

    ``x`` may be a scalar, a single point, or an array of points; the
    result is a float for a single point and a 1-D array otherwise.
    """
    if isinstance(feature, FeaturePrimitive):
        feature = (feature,)
    X, single = as_point_matrix(x, len(feature), "x")
    vals = np.ones(X.shape[0])
    for c, prim in enumerate(feature):
        vals = vals * prim.profile(X[:, c])
    return float(vals[0]) if single else vals


def feature_to_descriptor(feature):
    """Serialize a feature to the config/export schema.

    Single-factor features flatten to ``{"kind": ..., "param": ...}``;
    multi-factor features become ``{"factors": [...]}``.
    """
    factors = [{"kind": p.kind, "param": p.param} for p in feature]
    if len(factors) == 1:
        return factors[0]
    return {"factors": factors}


def feature_from_descriptor(desc, input_dim=1) -> Feature:
    """Parse a feature from the config/export schema."""
    if "factors" in desc:
        factors = desc["factors"]
    else:
        factors = [desc]
    feature = tuple(FeaturePrimitive(d["kind"], d["param"]) for d in factors)
    if len(feature) != input_dim:
        raise ValueError(
            f"feature descriptor has {len(feature)} factors, expected {input_dim}"
        )
    return feature


def quasi_uniform_probes(domain_box, count, seed=0):
    """Deterministic probe points covering a box, endpoints included.

    One input dimension gives an evenly spaced grid.  Higher dimensions
    use a seeded uniform sample with the box corners substituted into
    the first rows.
    """
    d = len(domain_box)
    count = int(count)
    if count < 1:
        raise ValueError("probe count must be >= 1")
    if d == 1:
        lo, hi = domain_box[0]
        return np.linspace(lo, hi, count).reshape(-1, 1)
    rng = np.random.default_rng(seed)
    lows = np.array([lo for lo, _ in domain_box])
    highs = np.array([hi for _, hi in domain_box])
    pts = rng.uniform(lows, highs, size=(count, d))
    corners = np.array(list(itertools.product(*domain_box)))
    k = min(len(corners), count)
    pts[:k] = corners[:k]
    return pts


@dataclass(frozen=True)
class FeatureSet:
    """An agent's ordered feature list on a box domain.

    Features must be linearly independent as functions on the box; this
    is verified numerically at construction (see
    :func:`verify_independence`) unless ``check_independence=False``.
    """

    features: tuple
    input_dim: int = 1
    domain_box: tuple = None
    check_independence: InitVar[bool] = True

    def __post_init__(self, check_independence):
        d = int(self.input_dim)
        if d < 1:
            raise ValueError("input_dim must be >= 1")
        object.__setattr__(self, "input_dim", d)
        feats = tuple(_as_feature(f, d) for f in self.features)
        if not feats:
            raise ValueError("a feature set needs at least one feature")
        object.__setattr__(self, "features", feats)
        box = self.domain_box
        if box is None:
            box = ((-10.0, 10.0),) * d
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        if len(box) != d:
            raise ValueError("domain_box must have one interval per coordinate")
        for lo, hi in box:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid domain interval ({lo}, {hi})")
        object.__setattr__(self, "domain_box", box)
        if check_independence:
            report = verify_independence(self)
            if not report.ok:
                raise IndependenceError(
                    "features are numerically linearly dependent on the domain",
                    report=report,
                )

    @property
    def size(self):
        """Number of features."""
        return len(self.features)

    # `dim` is the shared hypothesis-space protocol name (also on FusionBasis).
    @property
    def dim(self):
        return len(self.features)

    def design_matrix(self, points):
        """Evaluate all features at ``points``: shape (n, size)."""
        X, _ = as_point_matrix(points, self.input_dim)
        cols = np.empty((X.shape[0], self.size))
        for j, feature in enumerate(self.features):
            col = np.ones(X.shape[0])
            for c, prim in enumerate(feature):
                col = col * prim.profile(X[:, c])
            cols[:, j] = col
        return cols

    def kernel_matrix(self, xs, ys):
        """Cross-kernel matrix K[k, l] = K(xs[k], ys[l])."""
        return self.design_matrix(xs) @ self.design_matrix(ys).T

    def function(self, coeffs) -> "AgentFunction":
        return AgentFunction(coeffs, self)

    def zero(self) -> "AgentFunction":
        return AgentFunction(np.zeros(self.size), self)

    def section(self, y) -> "AgentFunction":
        """The kernel section K(., y) as a member of this space."""
        Y, single = as_point_matrix(y, self.input_dim, "y")
        if not single and Y.shape[0] != 1:
            raise ValueError("section expects a single point")
        return AgentFunction(self.design_matrix(Y)[0], self)


@dataclass(frozen=True, eq=False)
class AgentFunction:
    """A function in an agent's space, as coefficients over its features."""

    coeffs: np.ndarray
    space: FeatureSet

    def __post_init__(self):
        c = as_float_array(self.coeffs, "coeffs").reshape(-1)
        if c.shape[0] != self.space.size:
            raise ValueError(
                f"expected {self.space.size} coefficients, got {c.shape[0]}"
            )
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        X, single = as_point_matrix(x, self.space.input_dim, "x")
        vals = self.space.design_matrix(X) @ self.coeffs
        return float(vals[0]) if single else vals

    def norm(self):
        """Coefficient (space) norm of the function."""
        return float(np.linalg.norm(self.coeffs))

    def _check_same_space(self, other):
        if not isinstance(other, AgentFunction):
            return NotImplemented
        if self.space != other.space:
            raise BindingError("functions live in different feature sets")
        return other

    def __add__(self, other):
        other = self._check_same_space(other)
        if other is NotImplemented:
            return NotImplemented
        return AgentFunction(self.coeffs + other.coeffs, self.space)

    def __sub__(self, other):
        other = self._check_same_space(other)
        if other is NotImplemented:
            return NotImplemented
        return AgentFunction(self.coeffs - other.coeffs, self.space)

    def __mul__(self, scalar):
        return AgentFunction(self.coeffs * float(scalar), self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return AgentFunction(-self.coeffs, self.space)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired samples of an independent and a dependent variable."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        X = as_float_array(self.inputs, "inputs")
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("inputs must be a nonempty (m, d) array")
        y = as_output_vector(self.outputs, X.shape[0])
        X = X.copy()
        y = y.copy()
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)

    @property
    def m(self):
        return self.inputs.shape[0]

    def concat(self, other: "Dataset") -> "Dataset":
        if self.inputs.shape[1] != other.inputs.shape[1]:
            raise ValueError("datasets have different input dimensions")
        return Dataset(
            np.vstack([self.inputs, other.inputs]),
            np.concatenate([self.outputs, other.outputs]),
        )


def eval_function(f: AgentFunction, x):
    """Evaluate ``sum_j coeffs[j] * phi_j`` at ``x``."""
    return f(x)


def kernel_eval(fs: FeatureSet, x, y):
    """Kernel value ``sum_j phi_j(x) * phi_j(y)``.

    The sum always runs in feature-declaration order, which makes the
    symmetry ``kernel_eval(fs, x, y) == kernel_eval(fs, y, x)`` bit-exact.
    """
    vx = fs.design_matrix(np.atleast_1d(np.asarray(x, dtype=float)))[0]
    vy = fs.design_matrix(np.atleast_1d(np.asarray(y, dtype=float)))[0]
    return float(np.dot(vx, vy))


def gram_matrix(fs: FeatureSet, points):
    """Symmetric positive semidefinite kernel matrix over ``points``."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ValueError("gram_matrix needs at least one point")
    E = fs.design_matrix(pts)
    M = E @ E.T
    return (M + M.T) / 2.0


def inner_product(f: AgentFunction, g: AgentFunction):
    """Coefficient inner product; requires both functions in one space."""
    if f.space != g.space:
        raise BindingError("inner product requires functions from the same feature set")
    return float(np.dot(f.coeffs, g.coeffs))


@dataclass(frozen=True, eq=False)
class IndependenceReport:
    """Outcome of the numerical linear-independence check."""

    ok: bool
    smallest_singular_value: float
    largest_singular_value: float
    null_coeffs: np.ndarray  # rows: coefficient vectors of near-null combinations

    def __bool__(self):
        return self.ok


def verify_independence(fs: FeatureSet, probes=None, tol=INDEPENDENCE_TOL):
    """Check the features for linear independence on the domain.

    Evaluates every feature at the probe points and inspects the
    singular values of the resulting matrix: the set passes iff the
    smallest exceeds ``tol`` times the largest.  On failure the report
    carries coefficient vectors of the detected near-null combinations.
    """
    if probes is None:
        probes = quasi_uniform_probes(fs.domain_box, 8 * fs.size)
    probes, _ = as_point_matrix(probes, fs.input_dim, "probes")
    if probes.shape[0] < fs.size:
        raise ValueError(
            f"need at least {fs.size} probes to test {fs.size} features, "
            f"got {probes.shape[0]}"
        )
    E = fs.design_matrix(probes)
    svals = np.linalg.svd(E, compute_uv=False)
    _, _, vt = np.linalg.svd(E)
    cutoff = tol * svals[0]
    rank = int(np.sum(svals > cutoff))
    ok = rank == fs.size
    return IndependenceReport(
        ok=ok,
        smallest_singular_value=float(svals[-1]),
        largest_singular_value=float(svals[0]),
        null_coeffs=vt[rank:].copy(),
    )
