"""
Scaled conjugate gradient (Moller, 1993).

A conjugate gradient method that replaces the line search with a
Levenberg-Marquardt style scaled step. Curvature along the search direction
is estimated from one extra gradient evaluation, so each iteration costs two
gradients and one function value.
"""
from typing import Callable

import numpy as np

SIGMA0 = 1e-4
LAMBDA0 = 1e-6
LAMBDA_MIN = 1e-15
LAMBDA_MAX = 1e100
EPS = np.finfo(np.float64).eps


class NonFiniteObjective(ArithmeticError):
    """The objective or its gradient evaluated to inf/NaN."""


class ScaledConjugateGradient:
    """
    Iterative minimizer. Call `step()` once per epoch; `x` always holds the
    last accepted point and `f` its objective value. `converged` turns True
    when the search direction, the gradient or the step collapses.
    """

    def __init__(
        self,
        objective: Callable[[np.ndarray], float],
        gradient: Callable[[np.ndarray], np.ndarray],
        x0: np.ndarray,
        sigma0: float = SIGMA0,
        lambda0: float = LAMBDA0,
        tol_x: float = 1e-12,
        tol_f: float = 1e-14,
    ):
        self.objective = objective
        self.gradient = gradient
        self.sigma0 = sigma0
        self.lam = lambda0
        self.tol_x = tol_x
        self.tol_f = tol_f

        self.x = np.array(x0, dtype=np.float64, copy=True)
        self.f = self._eval_f(self.x)
        self.g = self._eval_g(self.x)
        self.d = -self.g
        self.num_params = self.x.size
        self.success = True
        self.num_success = 0
        self.converged = not np.any(self.g)
        self.iterations = 0

        self._mu = 0.0
        self._kappa = 0.0
        self._theta = 0.0

    def _eval_f(self, x: np.ndarray) -> float:
        value = float(self.objective(x))
        if not np.isfinite(value):
            raise NonFiniteObjective(f"objective is {value}")
        return value

    def _eval_g(self, x: np.ndarray) -> np.ndarray:
        grad = np.asarray(self.gradient(x), dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteObjective("gradient has non-finite entries")
        return grad

    def step(self) -> bool:
        """Одна итерация SCG. True, если точка сдвинулась."""
        if self.converged:
            return False
        self.iterations += 1

        # 1. Кривизна вдоль d (только после успешного шага)
        if self.success:
            self._mu = float(self.d @ self.g)
            if self._mu >= 0:
                self.d = -self.g
                self._mu = float(self.d @ self.g)
            self._kappa = float(self.d @ self.d)
            if self._kappa < EPS:
                self.converged = True
                return False
            sigma = self.sigma0 / np.sqrt(self._kappa)
            g_plus = self._eval_g(self.x + sigma * self.d)
            self._theta = float(self.d @ (g_plus - self.g)) / sigma

        # 2. Масштаб, при котором квадратичная модель положительно определена
        delta = self._theta + self.lam * self._kappa
        if delta <= 0:
            delta = self.lam * self._kappa
            self.lam = self.lam - self._theta / self._kappa

        # 3. Длина шага и параметр сравнения
        alpha = -self._mu / delta
        x_new = self.x + alpha * self.d
        f_new = self._eval_f(x_new)
        comparison = 2.0 * (f_new - self.f) / (alpha * self._mu)

        f_old = self.f
        self.success = comparison >= 0
        if self.success:
            self.num_success += 1
            self.x = x_new
            self.f = f_new
            if np.max(np.abs(alpha * self.d)) < self.tol_x and abs(f_new - f_old) < self.tol_f:
                self.converged = True
                return True
            g_old = self.g
            self.g = self._eval_g(self.x)
            if not np.any(self.g):
                self.converged = True
                return True

        # 4. Подстраиваем масштаб
        if comparison < 0.25:
            self.lam = min(4.0 * self.lam, LAMBDA_MAX)
        if comparison > 0.75:
            self.lam = max(0.5 * self.lam, LAMBDA_MIN)
        if self.lam >= LAMBDA_MAX:
            self.converged = True

        # 5. Новое направление; каждые num_params успехов - сброс к антиградиенту
        if self.num_success == self.num_params:
            self.d = -self.g
            self.num_success = 0
        elif self.success:
            beta = float((g_old - self.g) @ self.g) / self._mu
            self.d = beta * self.d - self.g

        return self.success
