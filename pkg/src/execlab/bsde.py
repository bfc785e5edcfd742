"""Value-factor equation solvers.

The minimal-cost factor Y solves a backward quadratic equation with terminal
value 1/2.  For deterministic coefficients the martingale parts vanish, so the
equation reduces to a scalar Riccati-type ODE.  This module provides the
closed forms (constant-resilience, Lambert-W, piecewise-drift, negative
resilience), a backward RK4 integrator, a residual validator and the
discrete-time backward recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientModel, TimeGrid


@dataclass(frozen=True)
class ValueSolution:
    """Value factor y, volatility loading z and feedback ratio on a grid.

    ``beta_pre`` holds the left limits of the feedback ratio; it differs from
    ``beta_tilde`` only when the drift (and hence the ratio) jumps.
    """

    grid: TimeGrid
    y: np.ndarray
    z: np.ndarray
    beta_tilde: np.ndarray
    source: str
    beta_pre: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.y < -1e-12) or np.any(self.y > 0.5 + 1e-12):
            raise ValueError("value factor must stay in [0, 1/2]")

    @property
    def beta_left(self) -> np.ndarray:
        return self.beta_tilde if self.beta_pre is None else self.beta_pre


@dataclass(frozen=True)
class DiscreteValue:
    """Discrete-time value factor from the backward recursion."""

    h: float
    times: np.ndarray
    y_h: np.ndarray

    def __post_init__(self):
        if np.any(self.y_h <= 0.0) or np.any(self.y_h > 0.5 + 1e-12):
            raise ValueError("discrete value factor must stay in (0, 1/2]")


_INV_E = -math.exp(-1.0)


def lambert_w0(z: float) -> float:
    """Principal branch of the Lambert W function via Halley iteration.

    Converges to relative residual 1e-14 from a logarithmic initial guess.
    """
    if z < _INV_E:
        if z > _INV_E * (1.0 + 1e-12):  # fp slack at the branch point
            z = _INV_E
        else:
            raise ValueError(f"lambert_w0 requires z >= -1/e, got {z}")
    if z == 0.0:
        return 0.0
    if z > math.e:
        lz = math.log(z)
        w = lz - math.log(lz)
    elif z > 0.0:
        w = math.log1p(z) * 0.7
    else:
        # series near the branch point -1/e
        p = math.sqrt(2.0 * (math.e * z + 1.0))
        w = -1.0 + p - p * p / 3.0
    for _ in range(50):
        ew = math.exp(w)
        f = w * ew - z
        if abs(f) <= 1e-14 * max(abs(z), 1e-300):
            return w
        w1 = w + 1.0
        w -= f / (ew * w1 - (w + 2.0) * f / (2.0 * w1))
    return w


def driver(model: CoefficientModel, t: float, y: float, z: float) -> float:
    """Generator term of the backward equation at (t, y, z)."""
    rho, mu, sig = model.rho(t), model.mu(t), model.sigma(t)
    denom = sig**2 * y + 0.5 * (2.0 * rho + mu - sig**2)
    if denom <= 0.0:
        raise ValueError(f"degenerate denominator at t={t}: {denom}")
    num = (rho + mu) * y + sig * z
    return -num * num / denom + mu * y + sig * z


def beta_tilde_at(model: CoefficientModel, t: float, y: float, z: float) -> float:
    """Feedback ratio ((rho+mu) y + sigma z) / (sigma^2 y + (2rho+mu-sigma^2)/2)."""
    rho, mu, sig = model.rho(t), model.mu(t), model.sigma(t)
    denom = sig**2 * y + 0.5 * (2.0 * rho + mu - sig**2)
    if denom <= 0.0:
        raise ValueError(f"degenerate denominator at t={t}: {denom}")
    return ((rho + mu) * y + sig * z) / denom


def solve_y_ow(rho: float, T: float, grid: TimeGrid) -> ValueSolution:
    """Constant resilience, constant impact: y(s) = 1 / (2 + (T - s) rho)."""
    if rho <= 0.0:
        raise ValueError("this closed form needs rho > 0")
    s = grid.times
    y = 1.0 / (2.0 + (T - s) * rho)
    y[-1] = 0.5
    return ValueSolution(grid=grid, y=y, z=np.zeros_like(y), beta_tilde=y.copy(),
                         source="OW")


def solve_y_lambert(rho: float, sigma: float, T: float,
                    grid: TimeGrid) -> ValueSolution:
    """Constant resilience, lognormal impact with zero drift.

    y(s) = c / W(c exp(kappa - (rho^2/sigma^2) s)) with c = (rho - sigma^2/2)
    / sigma^2 and kappa = log 2 + (2 rho - sigma^2 + rho^2 T) / sigma^2.
    """
    if sigma <= 0.0 or 2.0 * rho - sigma**2 <= 0.0:
        raise ValueError("requires sigma > 0 and 2 rho - sigma^2 > 0")
    c = (rho - 0.5 * sigma**2) / sigma**2
    kappa = math.log(2.0) + (2.0 * rho - sigma**2 + rho**2 * T) / sigma**2
    s = grid.times
    w = np.array([lambert_w0(c * math.exp(kappa - (rho**2 / sigma**2) * t))
                  for t in s])
    y = c / w
    y[-1] = 0.5
    beta = rho * y / (sigma**2 * y + rho - 0.5 * sigma**2)
    return ValueSolution(grid=grid, y=y, z=np.zeros_like(y), beta_tilde=beta,
                         source="LambertW")


def solve_y_deterministic(model: CoefficientModel, grid: TimeGrid) -> ValueSolution:
    """Deterministic impact (sigma == 0), constant resilience, piecewise drift.

    y(s) = exp(int_s^T mu) / (int_s^T [2 (rho+mu)^2 / (2rho+mu)] exp(int_r^T mu) dr + 2)
    with all integrals evaluated exactly piece by piece.
    """
    if not model.is_deterministic_impact():
        raise ValueError("requires sigma == 0; use the Lambert-W or ODE solver")
    if len(set(model.rho.values)) != 1:
        raise ValueError("requires constant resilience")
    grid.validate_model(model)
    rho = model.rho.values[0]
    t = grid.times
    h = grid.h
    n = grid.n_steps
    mu_step = model.mu.sample(t[:-1])          # constant on each step
    mu_cum = np.concatenate(([0.0], np.cumsum(mu_step * h)))  # int_0^{t_k} mu
    mu_tail = mu_cum[-1] - mu_cum              # int_{t_k}^T mu

    coef = 2.0 * (rho + mu_step) ** 2 / (2.0 * rho + mu_step)
    # exact per-step integral of coef * exp(int_r^T mu) over [t_k, t_{k+1}]
    step_int = np.empty(n)
    nonzero = mu_step != 0.0
    step_int[nonzero] = coef[nonzero] / mu_step[nonzero] * (
        np.exp(mu_tail[:-1][nonzero]) - np.exp(mu_tail[1:][nonzero]))
    step_int[~nonzero] = coef[~nonzero] * np.exp(mu_tail[:-1][~nonzero]) * h
    tail_int = np.concatenate((np.cumsum(step_int[::-1])[::-1], [0.0]))

    y = np.exp(mu_tail) / (tail_int + 2.0)
    y[-1] = 0.5
    mu_right = model.mu.sample(t)
    beta = (rho + mu_right) / (2.0 * rho + mu_right) * 2.0 * y
    mu_left = np.concatenate(([mu_right[0]], mu_step))
    beta_pre = (rho + mu_left) / (2.0 * rho + mu_left) * 2.0 * y
    src = "Constant" if rho == 0.0 else (
        "NegativeResilience" if rho < 0.0 else "PiecewiseJump")
    return ValueSolution(grid=grid, y=y, z=np.zeros_like(y), beta_tilde=beta,
                         source=src, beta_pre=beta_pre)


def solve_y_ode(model: CoefficientModel, grid: TimeGrid) -> ValueSolution:
    """Backward fourth-order Runge-Kutta integration of the scalar equation.

    Works for any deterministic piecewise-constant coefficients satisfying the
    positivity condition; restarts at coefficient breakpoints come for free
    because breakpoints lie on the grid.
    """
    grid.validate_model(model)
    eps = model.condition_report().epsilon
    t = grid.times
    h = grid.h
    n = grid.n_steps
    y = np.empty(n + 1)
    y[-1] = 0.5

    def rhs(tk, yv):
        rho, mu, sig = model.rho(tk), model.mu(tk), model.sigma(tk)
        denom = sig**2 * yv + 0.5 * (2.0 * rho + mu - sig**2)
        if denom < eps / 4.0:
            raise ValueError(f"step rejected: denominator {denom} below eps/4")
        num = (rho + mu) * yv
        return num * num / denom - mu * yv   # dY/ds with z == 0

    for k in range(n - 1, -1, -1):
        tk = t[k]  # coefficients are constant on [t_k, t_{k+1})
        yk1 = y[k + 1]
        k1 = rhs(tk, yk1)
        k2 = rhs(tk, yk1 - 0.5 * h * k1)
        k3 = rhs(tk, yk1 - 0.5 * h * k2)
        k4 = rhs(tk, yk1 - h * k3)
        yk = yk1 - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if -1e-12 <= yk < 0.0:
            yk = 0.0
        elif 0.5 < yk <= 0.5 + 1e-12:
            yk = 0.5
        y[k] = yk

    beta = np.array([beta_tilde_at(model, tk, yv, 0.0) for tk, yv in zip(t, y)])
    return ValueSolution(grid=grid, y=y, z=np.zeros(n + 1), beta_tilde=beta,
                         source="OdeIntegrated")


def ode_residual(solution: ValueSolution, model: CoefficientModel) -> float:
    """Max |central-difference dY/dt + driver| over interior grid points.

    Points within one step of a coefficient breakpoint are excluded (the
    derivative is one-sided there).
    """
    t = solution.grid.times
    h = solution.grid.h
    res = 0.0
    skip = set()
    for b in model.breakpoints:
        k = solution.grid.index_of(b)
        skip.update({k - 1, k, k + 1})
    for k in range(1, solution.grid.n_steps):
        if k in skip:
            continue
        dy = (solution.y[k + 1] - solution.y[k - 1]) / (2.0 * h)
        res = max(res, abs(dy + driver(model, t[k], solution.y[k], 0.0)))
    return float(res)


def discrete_value_recursion_raw(rho: float, mu: float, sigma: float,
                                 T: float, h: float) -> DiscreteValue:
    """Backward recursion for constant coefficients (see the model version).

    Accepts degenerate coefficient triples the model validator would reject,
    which is convenient for boundary checks.
    """
    n = round(T / h)
    if abs(n * h - T) > 1e-9 * T:
        raise ValueError("T must be an integer multiple of h")
    times = np.linspace(0.0, T, n + 1)
    y = np.empty(n + 1)
    y[-1] = 0.5
    e_rho = math.exp(-rho * h)
    e_g = math.exp(mu * h)                       # E[Gamma]
    e_ginv = math.exp((sigma**2 - mu) * h)       # E[1/Gamma]
    e_ginv_2rho = e_ginv * math.exp(-2.0 * rho * h)
    for k in range(n - 1, -1, -1):
        yp = y[k + 1]
        num = yp * (e_rho - e_g)
        if num == 0.0:
            y[k] = yp * e_g
            continue
        den = yp * (e_ginv_2rho - 2.0 * e_rho + e_g) + 0.5 * (1.0 - e_ginv_2rho)
        assert den > 0.0, "denominator must stay positive for y in (0, 1/2]"
        y[k] = yp * e_g - num * num / den
    return DiscreteValue(h=h, times=times, y_h=y)


def discrete_value_recursion(model: CoefficientModel, h: float) -> DiscreteValue:
    """Discrete-time value factor with exact lognormal conditional moments.

    Y^h(T) = 1/2 and, stepping backward,
    Y = E[Gamma] Y' - (Y'(e^{-rho h} - E[Gamma]))^2 / (Y' E[(e^{-rho h} - Gamma)^2 / Gamma] + (1 - E[1/Gamma] e^{-2 rho h})/2)
    where Gamma is the one-step lognormal impact ratio.
    """
    n = round(model.T / h)
    if abs(n * h - model.T) > 1e-9 * model.T:
        raise ValueError("T must be an integer multiple of h")
    grid = TimeGrid(0.0, model.T, n)
    grid.validate_model(model)
    times = grid.times
    y = np.empty(n + 1)
    y[-1] = 0.5
    for k in range(n - 1, -1, -1):
        rho, mu, sig = model.rho(times[k]), model.mu(times[k]), model.sigma(times[k])
        e_rho = math.exp(-rho * h)
        e_g = math.exp(mu * h)
        e_ginv_2rho = math.exp((sig**2 - mu) * h) * math.exp(-2.0 * rho * h)
        yp = y[k + 1]
        num = yp * (e_rho - e_g)
        if num == 0.0:
            y[k] = yp * e_g
            continue
        den = yp * (e_ginv_2rho - 2.0 * e_rho + e_g) + 0.5 * (1.0 - e_ginv_2rho)
        assert den > 0.0, "denominator must stay positive for y in (0, 1/2]"
        y[k] = yp * e_g - num * num / den
    return DiscreteValue(h=h, times=times, y_h=y)
