"""Regularized least-squares regression in a finite-dimensional space.

Works uniformly over an agent feature set or a fusion basis: both
expose ``design_matrix``, ``kernel_matrix``, ``function`` and ``dim``,
which is all the solvers need.

Two routes to the same minimizer of ``|y - f(x)|^2 + ridge * |f|^2``:

- :func:`solve_dual` follows the kernel route: solve
  ``(K^T K + ridge * K) alpha = K^T y`` for the weights of the kernel
  sections at the data points, taking the minimum-norm solution when
  the Gram matrix is singular (the materialized function is the same
  for every solution of that system).
- :func:`solve_primal_oracle` solves the coefficient-space normal
  equations ``(E^T E + ridge * I) w = E^T y`` directly, which are
  nonsingular for any positive ridge.  It exists as an independent
  cross-check for the dual route.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .features import Dataset
from .validation import as_point_matrix, as_output_vector, check_positive

#: Relative eigenvalue cutoff below which Gram directions count as null.
GRAM_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Data, ridge weight, and hypothesis space for one regression."""

    data: Dataset
    ridge: float
    space: object  # FeatureSet or FusionBasis

    def __post_init__(self):
        check_positive(self.ridge, "ridge")
        object.__setattr__(self, "ridge", float(self.ridge))
        if not hasattr(self.space, "design_matrix"):
            raise TypeError("space must provide a design_matrix method")


@dataclass(frozen=True, eq=False)
class RegressionSolution:
    """A fitted estimate: section weights, materialized function, objective.

    ``function`` equals ``sum_l dual_coeffs[l] * K(., x_l)`` as an
    element of the hypothesis space.
    """

    dual_coeffs: np.ndarray
    function: object  # AgentFunction or FusionFunction
    objective_value: float


def _objective(E, y, w, ridge):
    resid = y - E @ w
    return float(np.dot(resid, resid) + ridge * np.dot(w, w))


def solve_dual(p: RegressionProblem) -> RegressionSolution:
    """Kernel-side solve via the representer weights.

    ``alpha`` is the minimum-norm solution of
    ``(K^T K + ridge * K) alpha = K^T y``, resolved in the eigenbasis
    of the Gram matrix: eigendirections carry ``1 / (lam + ridge)`` and
    null directions carry zero, which is the pseudo-inverse solve of
    that system without ever squaring the Gram matrix's conditioning.
    The estimate is materialized as ``w = E^T alpha`` over the space's
    basis.
    """
    E = p.space.design_matrix(p.data.inputs)
    K = E @ E.T
    K = (K + K.T) / 2.0
    y = p.data.outputs
    lam, Q = np.linalg.eigh(K)
    lam = np.clip(lam, 0.0, None)
    yt = Q.T @ y
    scaled = np.zeros_like(yt)
    keep = lam > GRAM_RANK_TOL * lam[-1] if lam.size else lam > 0
    scaled[keep] = yt[keep] / (lam[keep] + p.ridge)
    alpha = Q @ scaled
    w = E.T @ alpha
    return RegressionSolution(
        dual_coeffs=alpha,
        function=p.space.function(w),
        objective_value=_objective(E, y, w, p.ridge),
    )


def solve_primal_oracle(p: RegressionProblem) -> RegressionSolution:
    """Coefficient-side solve through the always-nonsingular normal equations.

    The section weights are recovered from ``(K + ridge * I) alpha = y``,
    which materializes to the identical coefficient vector.
    """
    E = p.space.design_matrix(p.data.inputs)
    y = p.data.outputs
    dim = E.shape[1]
    w = np.linalg.solve(E.T @ E + p.ridge * np.eye(dim), E.T @ y)
    K = E @ E.T
    alpha = np.linalg.solve(K + p.ridge * np.eye(K.shape[0]), y)
    return RegressionSolution(
        dual_coeffs=alpha,
        function=p.space.function(w),
        objective_value=_objective(E, y, w, p.ridge),
    )


def solve_centralized(d1: Dataset, d2: Dataset, basis, ridge) -> RegressionSolution:
    """Fit on the pooled data of both agents in the combined space."""
    return solve_dual(RegressionProblem(d1.concat(d2), ridge, basis))


class KernelSpaceRegressor(BaseEstimator, RegressorMixin):
    """Least-squares regressor over a fixed finite-dimensional space.

    Parameters
    ----------
    space : FeatureSet or FusionBasis
        Hypothesis space the estimate lives in.
    ridge : float, default 1e-6
        Regularization weight on the squared space norm.
    solver : {"dual", "primal"}, default "dual"
        Kernel-side representer solve or coefficient-side normal
        equations; both give the same estimate.

    Attributes set by fit
    ---------------------
    solution_ : RegressionSolution
    function_ : the fitted function (callable on points)
    coef_ : coefficients over the space's basis
    dual_coef_ : section weights at the training points
    objective_ : training objective value
    n_features_in_ : input dimension seen during fit
    """

    def __init__(self, space=None, ridge=1e-6, solver="dual"):
        self.space = space
        self.ridge = ridge
        self.solver = solver

    def fit(self, X, y):
        if self.space is None:
            raise ValueError("space must be set before fitting")
        if self.solver not in ("dual", "primal"):
            raise ValueError(f"unknown solver {self.solver!r}")
        X, _ = as_point_matrix(X, self.space.input_dim, "X")
        y = as_output_vector(y, X.shape[0])
        problem = RegressionProblem(Dataset(X, y), self.ridge, self.space)
        solve = solve_dual if self.solver == "dual" else solve_primal_oracle
        solution = solve(problem)
        self.solution_ = solution
        self.function_ = solution.function
        self.coef_ = solution.function.coeffs
        self.dual_coef_ = solution.dual_coeffs
        self.objective_ = solution.objective_value
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "function_"):
            raise AttributeError("estimator is not fitted; call fit first")
        X, single = as_point_matrix(X, self.space.input_dim, "X")
        vals = self.function_(X)
        return np.atleast_1d(vals) if single else vals
