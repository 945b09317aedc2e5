"""The combined function space of two agents and its transfer operators.

Two agent spaces with kernels ``K1`` and ``K2`` combine into a fusion
space ``H`` whose kernel is the sum ``K = K1 + K2``.  Concretely, the
concatenated raw feature list usually contains linear dependencies; the
quotient by the detected null space yields an orthonormal basis
``psi_1, ..., psi_r`` of ``H`` in which the norm is Euclidean and equals
the minimum of ``|f1|^2 + |f2|^2`` over all splittings ``f = f1 + f2``.

The module provides:

- :func:`build_fusion_basis`: null-space detection by SVD over probe
  evaluations plus a deterministic alignment of the basis with the raw
  features, which reproduces diagonal operator matrices whenever any
  orthonormal basis diagonalizes them.
- :func:`upload`: the norm-contractive embedding of an agent function.
- :func:`operator_matrix` / :func:`sqrt_operator` /
  :func:`projection_matrix`: the averaging operators ``L_bar_i``, their
  symmetric square roots, and the projections onto each agent's image.
- :func:`download` / :func:`convert_to_agent`: mapping a fusion function
  back to one agent's own coefficients.
- operator export/import with full-precision decimal serialization.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    BindingError,
    ConstructionError,
    InternalConsistencyError,
    NotInAgentSpaceError,
    NotPositiveError,
)
from .features import (
    AgentFunction,
    FeatureSet,
    feature_from_descriptor,
    feature_to_descriptor,
    quasi_uniform_probes,
)
from .validation import as_float_array, as_point_matrix

#: Relative singular-value cutoff for null-space detection.
RANK_TOL = 1e-10

#: Residual tolerance for converting a fusion function to agent coefficients.
CONVERT_TOL = 1e-8

#: Eigenvalues of a nominally positive operator below this are an error;
#: eigenvalues in [NEGATIVE_EIGENVALUE_FLOOR, 0) are clipped to zero.
NEGATIVE_EIGENVALUE_FLOOR = -1e-9

#: Eigenvalues below this are treated as exact zeros when taking square
#: roots.  True zeros come back from the eigensolver at round-off scale
#: (~1e-16) and the square root would amplify them to ~1e-8.
POSITIVE_EIGENVALUE_FLOOR = 1e-13

OPERATOR_KINDS = (
    "L_bar_1",
    "L_bar_2",
    "sqrt_L_1",
    "sqrt_L_2",
    "proj_M_1",
    "proj_M_2",
)


@dataclass(frozen=True, eq=False)
class FusionBasis:
    """Orthonormal basis of the combined space over the raw feature list.

    ``raw_features`` concatenates agent 1's then agent 2's features
    (``D`` in total) and ``agent_slices`` records each agent's index
    range as ``(start, stop)`` pairs.  ``basis_map`` is the ``r x D``
    matrix ``T`` with orthonormal rows defining
    ``psi_k = sum_m T[k, m] * raw_m``; ``null_space`` holds an
    orthonormal ``D x (D - r)`` matrix whose columns span the detected
    linear dependencies among the raw features.
    """

    raw_features: tuple
    agent_slices: tuple  # ((start1, stop1), (start2, stop2))
    null_space: np.ndarray
    basis_map: np.ndarray
    rank: int
    spaces: tuple  # (FeatureSet, FeatureSet)

    def __post_init__(self):
        D = len(self.raw_features)
        T = as_float_array(self.basis_map, "basis_map")
        N = as_float_array(self.null_space, "null_space")
        r = int(self.rank)
        if T.shape != (r, D):
            raise ValueError(f"basis_map must be ({r}, {D}), got {T.shape}")
        if N.shape != (D, D - r):
            raise ValueError(f"null_space must be ({D}, {D - r}), got {N.shape}")
        eye_r = np.eye(r)
        if np.max(np.abs(T @ T.T - eye_r)) > 1e-12:
            raise ValueError("basis_map rows are not orthonormal")
        if np.max(np.abs(T.T @ T + N @ N.T - np.eye(D))) > 1e-12:
            raise ValueError("basis_map and null_space do not complement each other")
        slices = tuple((int(a), int(b)) for a, b in self.agent_slices)
        if len(slices) != 2 or slices[0][0] != 0 or slices[0][1] != slices[1][0] \
                or slices[1][1] != D:
            raise ValueError("agent_slices must partition the raw feature range")
        T = T.copy()
        N = N.copy()
        T.flags.writeable = False
        N.flags.writeable = False
        object.__setattr__(self, "basis_map", T)
        object.__setattr__(self, "null_space", N)
        object.__setattr__(self, "rank", r)
        object.__setattr__(self, "agent_slices", slices)
        object.__setattr__(self, "raw_features", tuple(self.raw_features))
        object.__setattr__(self, "spaces", tuple(self.spaces))
        # Evaluation helper over the raw (dependent) feature list.
        raw_space = FeatureSet(
            self.raw_features,
            input_dim=self.spaces[0].input_dim,
            domain_box=self.spaces[0].domain_box,
            check_independence=False,
        )
        object.__setattr__(self, "_raw_space", raw_space)

    @property
    def input_dim(self):
        return self.spaces[0].input_dim

    @property
    def domain_box(self):
        return self.spaces[0].domain_box

    @property
    def dim(self):
        """Dimension of the combined space (rank of the raw features)."""
        return self.rank

    def agent_map(self, agent):
        """Columns of T for one agent: the r x |features_i| block."""
        start, stop = self.agent_slices[_agent_index(agent)]
        return self.basis_map[:, start:stop]

    def raw_design_matrix(self, points):
        """Evaluate all D raw features at ``points``: shape (n, D)."""
        return self._raw_space.design_matrix(points)

    def design_matrix(self, points):
        """Evaluate the orthonormal basis at ``points``: shape (n, rank)."""
        return self.raw_design_matrix(points) @ self.basis_map.T

    def kernel_matrix(self, xs, ys):
        return self.design_matrix(xs) @ self.design_matrix(ys).T

    def function(self, coeffs) -> "FusionFunction":
        return FusionFunction(coeffs, self)

    def zero(self) -> "FusionFunction":
        return FusionFunction(np.zeros(self.rank), self)

    def section(self, y) -> "FusionFunction":
        """The kernel section K(., y) of the combined space."""
        Y, single = as_point_matrix(y, self.input_dim, "y")
        if not single and Y.shape[0] != 1:
            raise ValueError("section expects a single point")
        return FusionFunction(self.design_matrix(Y)[0], self)


def _agent_index(agent):
    if agent not in (1, 2):
        raise ValueError(f"agent must be 1 or 2, got {agent!r}")
    return agent - 1


def _same_basis(a: FusionBasis, b: FusionBasis):
    if a is b:
        return True
    return (
        a.rank == b.rank
        and a.agent_slices == b.agent_slices
        and a.raw_features == b.raw_features
        and np.array_equal(a.basis_map, b.basis_map)
    )


@dataclass(frozen=True, eq=False)
class FusionFunction:
    """A function of the combined space over its orthonormal basis."""

    coeffs: np.ndarray
    basis: FusionBasis

    def __post_init__(self):
        c = as_float_array(self.coeffs, "coeffs").reshape(-1)
        if c.shape[0] != self.basis.rank:
            raise ValueError(
                f"expected {self.basis.rank} coefficients, got {c.shape[0]}"
            )
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        X, single = as_point_matrix(x, self.basis.input_dim, "x")
        vals = self.basis.design_matrix(X) @ self.coeffs
        return float(vals[0]) if single else vals

    def norm(self):
        """Norm in the combined space (Euclidean on basis coefficients)."""
        return float(np.linalg.norm(self.coeffs))

    def _bound(self, other):
        if not isinstance(other, FusionFunction):
            return NotImplemented
        if not _same_basis(self.basis, other.basis):
            raise BindingError("fusion functions are bound to different bases")
        return other

    def __add__(self, other):
        other = self._bound(other)
        if other is NotImplemented:
            return NotImplemented
        return FusionFunction(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other):
        other = self._bound(other)
        if other is NotImplemented:
            return NotImplemented
        return FusionFunction(self.coeffs - other.coeffs, self.basis)

    def __mul__(self, scalar):
        return FusionFunction(self.coeffs * float(scalar), self.basis)

    __rmul__ = __mul__

    def __neg__(self):
        return FusionFunction(-self.coeffs, self.basis)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Matrix of a linear operator on the combined space, in the psi basis."""

    matrix: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        M = as_float_array(self.matrix, "matrix")
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("operator matrix must be square")
        if np.max(np.abs(M - M.T)) > 1e-12:
            raise ValueError("operator matrix must be symmetric")
        M = (M + M.T) / 2.0
        M.flags.writeable = False
        object.__setattr__(self, "matrix", M)

    @property
    def agent(self):
        return int(self.kind[-1])


def _sign_fixed_rows(T):
    """Flip row signs so each row's largest-magnitude entry is positive."""
    T = T.copy()
    for k in range(T.shape[0]):
        idx = int(np.argmax(np.abs(T[k])))
        if T[k, idx] < 0:
            T[k] = -T[k]
    return T


def _aligned_rows(P, r):
    """Deterministic orthonormal basis of the row space of projector P.

    Runs Gram-Schmidt over the projected coordinate axes ``P e_m`` in
    raw-feature order.  Whenever an orthonormal basis exists in which
    the agent operators are diagonal, this produces it (each accepted
    direction is the raw axis cleaned of null-space overlap), and the
    leading nonzero entry of every row comes out positive.  Returns
    None when the sweep does not yield exactly ``r`` vectors.
    """
    accepted = []
    for m in range(P.shape[0]):
        v = P[:, m].copy()
        for u in accepted:
            v -= np.dot(u, v) * u
        nv = np.linalg.norm(v)
        if nv <= 1e-8:
            continue
        v /= nv
        # second pass keeps the basis orthonormal to machine precision
        for u in accepted:
            v -= np.dot(u, v) * u
        v /= np.linalg.norm(v)
        accepted.append(v)
    if len(accepted) != r:
        return None
    T = np.vstack(accepted)
    if np.max(np.abs(T @ T.T - np.eye(r))) > 1e-12:
        return None
    return T


def _probe_rank(raw_space, probes, rank_tol):
    E = raw_space.design_matrix(probes)
    svals = np.linalg.svd(E, compute_uv=False)
    cutoff = rank_tol * svals[0]
    return int(np.sum(svals > cutoff))


def build_fusion_basis(
    fs1: FeatureSet,
    fs2: FeatureSet,
    probes=None,
    rank_tol=RANK_TOL,
) -> FusionBasis:
    """Combine two agent spaces into one orthonormal fusion basis.

    Evaluates the concatenated raw features at the probe points, takes
    an SVD, and declares singular values below ``rank_tol`` times the
    largest as linear dependencies.  The surviving row space is then
    re-expressed by a deterministic raw-feature alignment (see
    :func:`_aligned_rows`), falling back to sign-fixed right singular
    vectors when no aligned sweep exists.

    The detected rank is cross-checked against an independently drawn
    probe set; disagreement means the probes, not the features, caused
    a rank deficiency.
    """
    if fs1.input_dim != fs2.input_dim:
        raise ConstructionError("agent spaces have different input dimensions")
    if fs1.domain_box != fs2.domain_box:
        raise ConstructionError("agent spaces have different domain boxes")
    raw = fs1.features + fs2.features
    D = len(raw)
    slices = ((0, fs1.size), (fs1.size, D))
    raw_space = FeatureSet(
        raw, input_dim=fs1.input_dim, domain_box=fs1.domain_box,
        check_independence=False,
    )
    if probes is None:
        probes = quasi_uniform_probes(fs1.domain_box, 8 * D)
    probes, _ = as_point_matrix(probes, fs1.input_dim, "probes")
    if probes.shape[0] < 2 * D:
        raise ValueError(f"need at least {2 * D} probes, got {probes.shape[0]}")

    E = raw_space.design_matrix(probes)
    _, svals, vt = np.linalg.svd(E)
    cutoff = rank_tol * svals[0]
    r = int(np.sum(svals > cutoff))

    retry_probes = quasi_uniform_probes(fs1.domain_box, 8 * D + 5, seed=1)
    r_retry = _probe_rank(raw_space, retry_probes, rank_tol)
    if r != r_retry:
        raise ConstructionError(
            f"rank of the raw features depends on the probe set ({r} vs "
            f"{r_retry}); the probes undersample the domain"
        )

    null = vt[r:].T  # columns span the dependencies
    P = vt[:r].T @ vt[:r]
    T = _aligned_rows(P, r)
    if T is None:
        T = _sign_fixed_rows(vt[:r])
    return FusionBasis(
        raw_features=raw,
        agent_slices=slices,
        null_space=null,
        basis_map=T,
        rank=r,
        spaces=(fs1, fs2),
    )


def fusion_kernel(basis: FusionBasis, x, y):
    """Kernel of the combined space: sum over the orthonormal basis.

    Equals the sum of the two agent kernels at every point pair.
    """
    vx = basis.design_matrix(np.atleast_1d(np.asarray(x, dtype=float)))[0]
    vy = basis.design_matrix(np.atleast_1d(np.asarray(y, dtype=float)))[0]
    return float(np.dot(vx, vy))


def upload(f: AgentFunction, basis: FusionBasis) -> FusionFunction:
    """Embed an agent function into the combined space.

    The embedding preserves function values and never increases the
    norm.  The agent is identified by its feature set.
    """
    for agent, space in zip((1, 2), basis.spaces):
        if f.space == space:
            start, stop = basis.agent_slices[agent - 1]
            gamma = np.zeros(len(basis.raw_features))
            gamma[start:stop] = f.coeffs
            return FusionFunction(basis.basis_map @ gamma, basis)
    raise BindingError("the function's feature set is not part of this basis")


def h_inner_product(f: FusionFunction, g: FusionFunction):
    """Inner product of the combined space (Euclidean on basis coeffs)."""
    if not _same_basis(f.basis, g.basis):
        raise BindingError("fusion functions are bound to different bases")
    return float(np.dot(f.coeffs, g.coeffs))


def split_components(f: FusionFunction):
    """The canonical minimal splitting ``f = f1 + f2`` across the agents.

    Lifts the coefficients to the raw feature list along the null-space
    complement and cuts at the agent boundary.  Among all splittings of
    ``f`` this one minimizes ``|f1|^2 + |f2|^2``, and that minimum is
    the squared norm of ``f`` in the combined space.
    """
    gamma = f.basis.basis_map.T @ f.coeffs
    parts = []
    for agent, space in zip((1, 2), f.basis.spaces):
        start, stop = f.basis.agent_slices[agent - 1]
        parts.append(AgentFunction(gamma[start:stop], space))
    return tuple(parts)


def operator_matrix(basis: FusionBasis, agent) -> OperatorMatrix:
    """Matrix of the agent-averaging operator ``L_bar_agent``.

    Built as ``T_i T_i^T`` from the agent's block of the basis map; the
    two matrices are symmetric, have eigenvalues in [0, 1], and sum to
    the identity.
    """
    Ti = basis.agent_map(agent)
    M = Ti @ Ti.T
    return OperatorMatrix((M + M.T) / 2.0, f"L_bar_{agent}")


def sqrt_operator(L: OperatorMatrix) -> OperatorMatrix:
    """Symmetric positive square root of a positive operator matrix.

    Eigenvalues in ``[-1e-9, 0)`` are treated as numerical noise and
    clipped to zero; anything lower signals a broken construction.
    Tiny positive eigenvalues (below round-off scale) are zeroed as
    well so that the square root of an exact zero stays exactly zero.
    """
    kind_map = {
        "L_bar_1": "sqrt_L_1",
        "L_bar_2": "sqrt_L_2",
        "proj_M_1": "proj_M_1",
        "proj_M_2": "proj_M_2",
    }
    if L.kind not in kind_map:
        raise ValueError(f"square root of kind {L.kind!r} is not defined")
    lam, U = np.linalg.eigh(L.matrix)
    if lam[0] < NEGATIVE_EIGENVALUE_FLOOR:
        raise NotPositiveError(
            f"operator {L.kind} has eigenvalue {lam[0]:.3e} below "
            f"{NEGATIVE_EIGENVALUE_FLOOR}"
        )
    lam = np.where(lam < POSITIVE_EIGENVALUE_FLOOR, 0.0, lam)
    R = (U * np.sqrt(lam)) @ U.T
    return OperatorMatrix((R + R.T) / 2.0, kind_map[L.kind])


def projection_matrix(basis: FusionBasis, agent) -> OperatorMatrix:
    """Orthogonal projection onto the image of agent's space in H.

    Assembled from the eigenvectors of ``L_bar_agent`` with eigenvalue
    above the noise floor.
    """
    L = operator_matrix(basis, agent)
    lam, U = np.linalg.eigh(L.matrix)
    V = U[:, lam > 1e-9]
    P = V @ V.T
    return OperatorMatrix((P + P.T) / 2.0, f"proj_M_{agent}")


def convert_to_agent(f: FusionFunction, agent, tol=CONVERT_TOL) -> AgentFunction:
    """Express a fusion function in one agent's own coefficients.

    Solves the agent block of the basis map against the coefficients by
    least squares and checks the residual; a residual above
    ``tol * (1 + |coeffs|)`` means the function has a component outside
    the agent's span.
    """
    idx = _agent_index(agent)
    Ti = f.basis.agent_map(agent)
    c = f.coeffs
    w, *_ = np.linalg.lstsq(Ti, c, rcond=None)
    residual = float(np.linalg.norm(Ti @ w - c))
    if residual > tol * (1.0 + float(np.linalg.norm(c))):
        raise NotInAgentSpaceError(
            f"function is not in agent {agent}'s space "
            f"(residual {residual:.3e})"
        )
    return AgentFunction(w, f.basis.spaces[idx])


def download(f: FusionFunction, agent) -> AgentFunction:
    """Transfer a fusion function down to one agent.

    Applies the square root of the agent's averaging operator to the
    coefficients and converts the result to agent coordinates.  The
    projection onto the agent's image is implicit: the square root
    annihilates everything outside it.
    """
    sqrtL = sqrt_operator(operator_matrix(basis=f.basis, agent=agent))
    g = FusionFunction(sqrtL.matrix @ f.coeffs, f.basis)
    try:
        return convert_to_agent(g, agent)
    except NotInAgentSpaceError as exc:
        raise InternalConsistencyError(
            f"download produced a function outside agent {agent}'s space: {exc}"
        ) from exc


@dataclass(frozen=True, eq=False)
class SpanReport:
    """Rank of a family of kernel sections against the space dimension."""

    rank: int
    dim: int
    ok: bool
    smallest_singular_value: float
    largest_singular_value: float

    def __bool__(self):
        return self.ok


def kernel_sections_span(basis: FusionBasis, probes) -> SpanReport:
    """Check whether kernel sections at the probes span the space."""
    probes, _ = as_point_matrix(probes, basis.input_dim, "probes")
    if probes.shape[0] < basis.rank:
        raise ValueError(
            f"need at least {basis.rank} probes, got {probes.shape[0]}"
        )
    S = basis.design_matrix(probes)
    svals = np.linalg.svd(S, compute_uv=False)
    cutoff = RANK_TOL * svals[0] if svals[0] > 0 else 0.0
    rank = int(np.sum(svals > cutoff))
    return SpanReport(
        rank=rank,
        dim=basis.rank,
        ok=rank == basis.rank,
        smallest_singular_value=float(svals[-1]) if svals.size else 0.0,
        largest_singular_value=float(svals[0]) if svals.size else 0.0,
    )


def _format_real(x):
    """Decimal form with 17 significant digits (full float64 precision)."""
    return f"{float(x):.16e}"


def _render_json(obj, indent=0):
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for k, v in obj.items():
            items.append(f'{pad}  {json.dumps(k)}: {_render_json(v, indent + 2)}')
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {_render_json(v, indent + 2)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_real(obj)
    return json.dumps(obj)


def export_operators(basis: FusionBasis) -> dict:
    """Operator export document: rank, features, basis map, operators.

    All matrices are row-major nested lists; reals keep 17 significant
    digits when written through :func:`write_operators`.
    """
    L1 = operator_matrix(basis, 1)
    L2 = operator_matrix(basis, 2)
    doc = {
        "rank": basis.rank,
        "raw_feature_descriptors": [
            feature_to_descriptor(f) for f in basis.raw_features
        ],
        "T": [[float(v) for v in row] for row in basis.basis_map],
        "L1": [[float(v) for v in row] for row in L1.matrix],
        "L2": [[float(v) for v in row] for row in L2.matrix],
        "sqrtL1": [[float(v) for v in row] for row in sqrt_operator(L1).matrix],
        "sqrtL2": [[float(v) for v in row] for row in sqrt_operator(L2).matrix],
        "agent_slices": [list(s) for s in basis.agent_slices],
        "input_dim": basis.input_dim,
        "domain_box": [[float(lo), float(hi)] for lo, hi in basis.domain_box],
    }
    return doc


def write_operators(basis: FusionBasis, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_render_json(export_operators(basis)))
        fh.write("\n")


def basis_from_export(doc: dict) -> FusionBasis:
    """Rebuild a fusion basis from an operator export document.

    The basis map round-trips exactly (17 significant decimal digits
    reproduce every float64), so functions and operators rebuilt from
    the document match the originals bit for bit.
    """
    input_dim = int(doc["input_dim"])
    box = tuple((float(lo), float(hi)) for lo, hi in doc["domain_box"])
    features = tuple(
        feature_from_descriptor(d, input_dim) for d in doc["raw_feature_descriptors"]
    )
    slices = tuple((int(a), int(b)) for a, b in doc["agent_slices"])
    spaces = tuple(
        FeatureSet(
            features[start:stop], input_dim=input_dim, domain_box=box,
            check_independence=False,
        )
        for start, stop in slices
    )
    T = np.array(doc["T"], dtype=float)
    r, D = T.shape
    if r < D:
        _, _, vt = np.linalg.svd(T)
        null = vt[r:].T
    else:
        null = np.zeros((D, 0))
    return FusionBasis(
        raw_features=features,
        agent_slices=slices,
        null_space=null,
        basis_map=T,
        rank=r,
        spaces=spaces,
    )


def basis_digest(basis: FusionBasis) -> str:
    """Stable hash of the basis: features, slices, and exact basis map."""
    payload = {
        "raw_feature_descriptors": [
            feature_to_descriptor(f) for f in basis.raw_features
        ],
        "agent_slices": [list(s) for s in basis.agent_slices],
        "rank": basis.rank,
        "T": [[_format_real(v) for v in row] for row in basis.basis_map],
        "input_dim": basis.input_dim,
        "domain_box": [[_format_real(lo), _format_real(hi)]
                       for lo, hi in basis.domain_box],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
