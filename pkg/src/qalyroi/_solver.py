"""Box-constrained regularised least squares by projected descent.

Minimises ``||r(x)||^2 + sum_j w_j (x_j - c_j)^2`` over a box.  Each
iteration takes a Gauss-Newton scaled direction on the free variables
(active-set rule of Bertsekas' projected Newton method), projects onto the
box and backtracks with an Armijo test along the projection arc.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MIN_ALPHA = 1e-20


@dataclass
class SolverResult:
    x: np.ndarray
    loss: float
    grad_norm: float
    iterations: int
    status: str  # "gradient", "step", "stalled" or "max_iters"
    history: list

    @property
    def converged(self) -> bool:
        return self.status in ("gradient", "step")


class LeastSquaresProblem:
    """Interface consumed by :func:`projected_descent`.

    Subclasses implement ``residuals(x)`` and ``jacobian(x)`` (of the
    residuals).  ``weights`` and ``centers`` define the quadratic penalty.
    """

    def __init__(self, lower, upper, weights, centers):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.centers = np.asarray(centers, dtype=float)

    def residuals(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def penalty(self, x):
        return float(np.sum(self.weights * (x - self.centers) ** 2))

    def loss(self, x):
        r = self.residuals(x)
        return float(r @ r) + self.penalty(x)

    def gradient(self, x, r=None, J=None):
        if r is None:
            r = self.residuals(x)
        if J is None:
            J = self.jacobian(x)
        return 2.0 * (J.T @ r) + 2.0 * self.weights * (x - self.centers)

    def projected_gradient_norm(self, x, g=None):
        if g is None:
            g = self.gradient(x)
        return float(np.linalg.norm(x - self.project(x - g)))


def projected_descent(problem: LeastSquaresProblem, x0, grad_tol, step_tol, max_iters) -> SolverResult:
    x = problem.project(np.asarray(x0, dtype=float))
    r = problem.residuals(x)
    f = float(r @ r) + problem.penalty(x)
    history = [f]
    status = "max_iters"
    gnorm = np.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        J = problem.jacobian(x)
        g = problem.gradient(x, r, J)
        gnorm = problem.projected_gradient_norm(x, g)
        if gnorm <= grad_tol:
            status = "gradient"
            iterations -= 1
            break

        eps = min(1e-6, gnorm)
        active = ((x <= problem.lower + eps) & (g > 0)) | ((x >= problem.upper - eps) & (g < 0))
        free = ~active
        d = np.where(active, -g, 0.0)
        if free.any():
            H = 2.0 * (J.T @ J) + 2.0 * np.diag(problem.weights)
            Hff = H[np.ix_(free, free)]
            d[free] = np.linalg.lstsq(Hff, -g[free], rcond=None)[0]
        if not np.all(np.isfinite(d)) or g @ d >= 0:
            d = -g

        alpha = 1.0
        while True:
            x_new = problem.project(x + alpha * d)
            r_new = problem.residuals(x_new)
            f_new = float(r_new @ r_new) + problem.penalty(x_new)
            if f_new <= f + ARMIJO_C * (g @ (x_new - x)):
                break
            alpha *= BACKTRACK
            if alpha < MIN_ALPHA:
                x_new = None
                break
        if x_new is None:
            status = "stalled"
            break

        step = float(np.linalg.norm(x_new - x))
        x, r, f = x_new, r_new, f_new
        history.append(f)
        if step < step_tol:
            status = "step"
            gnorm = problem.projected_gradient_norm(x)
            break
    else:
        gnorm = problem.projected_gradient_norm(x)
    return SolverResult(x=x, loss=f, grad_norm=gnorm, iterations=iterations, status=status, history=history)
