"""Optimal execution plans and the counterexample strategy families.

The optimal position path is a multiple of a stochastic exponential:
X* = (x - d/gamma_t) E(Q) (1 - beta) with a terminal block trade, and the
associated deviation is D* = (x - d/gamma_t) E(Q) (-gamma beta).  The drift
integral of Q is evaluated with an exact quadrature based on the identity
d(log y)/ds = beta (rho + mu) - mu, which keeps the deviation exactly
constant between block trades in the deterministic regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bsde import ValueSolution
from .coefficients import (CoefficientModel, MarketPath, TimeGrid,
                           stochastic_exponential)
from .deviation import DeviationPath, GridMismatch, Strategy


@dataclass(frozen=True)
class OptimalPlan:
    """Optimal position/deviation pair on [t, T] for one market path.

    ``exp_q`` is the stochastic exponential of Q on the grid; ``beta`` the
    cadlag feedback ratio and ``beta_pre`` its left limits.  The inputs
    needed to rebuild the plan from an interior time are retained.
    """

    grid: TimeGrid
    q_increments: np.ndarray
    q_quadratic: np.ndarray
    exp_q: np.ndarray
    x_star: Strategy
    d_star: DeviationPath
    beta: np.ndarray
    beta_pre: np.ndarray
    scale: float            # x - d/gamma_t
    model: CoefficientModel
    value_solution: ValueSolution
    market: MarketPath
    t: float
    x: float
    d: float


def _beta_ds_integrals(y: np.ndarray, rho: np.ndarray, mu: np.ndarray,
                       h: float) -> np.ndarray:
    """Exact per-step integrals of beta over the grid steps.

    For deterministic value factors d(log y)/ds = beta (rho + mu) - mu, so
    the integral of beta over a step with constant coefficients is
    (log(y_{k+1}/y_k) + mu h) / (rho + mu); when rho + mu = 0 the ratio
    beta itself vanishes.
    """
    out = np.zeros(len(y) - 1)
    denom = rho + mu
    nz = denom != 0.0
    out[nz] = (np.log(y[1:][nz] / y[:-1][nz]) + mu[nz] * h) / denom[nz]
    return out


def optimal_plan(model: CoefficientModel, value_solution: ValueSolution,
                 market: MarketPath, t: float, x: float, d: float) -> OptimalPlan:
    """Construct the cost-minimizing plan started at (t, x, d) on one path.

    ``t`` must be a grid point of the market's grid; the plan lives on the
    sub-grid [t, T].  With zero resilience the feedback ratio is identically
    1, so the plan closes the position immediately.
    """
    if value_solution.grid != market.grid:
        raise GridMismatch("value solution and market live on different grids")
    full_grid = market.grid
    k0 = full_grid.index_of(t)
    if k0 > 0:
        market = market.tail(k0)
    grid = market.grid
    h = grid.h
    t_left = grid.times[:-1]
    rho = model.rho.sample(t_left)
    mu = model.mu.sample(t_left)
    sig = model.sigma.sample(t_left)

    y = value_solution.y[k0:]
    if all(v == 0.0 for v in model.rho.values):
        # zero resilience: the ratio is exactly 1 and the position is closed
        # at once; enforcing this exactly avoids spurious round-off trades
        beta = np.ones(grid.n_steps + 1)
        beta_pre = beta
        int_beta = np.full(grid.n_steps, h)
    else:
        beta = value_solution.beta_tilde[k0:]
        beta_pre = value_solution.beta_left[k0:]
        int_beta = _beta_ds_integrals(y, rho, mu, h)

    q_inc = -beta[:-1] * sig * market.w - int_beta * (mu + rho - sig**2)
    q_quad = beta[:-1] ** 2 * sig**2 * h
    exp_q = stochastic_exponential(q_inc, q_quad)

    gamma_t = market.gamma[0]
    scale = x - d / gamma_t
    xs = scale * exp_q * (1.0 - beta)
    xs[-1] = 0.0
    blocks = beta != beta_pre
    blocks[0] = True
    blocks[-1] = True
    x_star = Strategy(grid=grid, x_pre=x, values=xs, is_block=blocks)

    d_values = scale * exp_q * (-market.gamma * beta)
    d_values[-1] = scale * exp_q[-1] * (-market.gamma[-1])
    d_pre = scale * exp_q * (-market.gamma * beta_pre)
    d_pre[0] = d
    d_star = DeviationPath(grid=grid, d_pre=d, values=d_values,
                           pre_trade=d_pre,
                           impact_state=xs - market.alpha * d_values)

    vs_tail = ValueSolution(grid=grid, y=y, z=value_solution.z[k0:],
                            beta_tilde=value_solution.beta_tilde[k0:],
                            source=value_solution.source,
                            beta_pre=None if value_solution.beta_pre is None
                            else value_solution.beta_pre[k0:])
    return OptimalPlan(grid=grid, q_increments=q_inc, q_quadratic=q_quad,
                       exp_q=exp_q, x_star=x_star, d_star=d_star, beta=beta,
                       beta_pre=np.asarray(beta_pre), scale=scale, model=model,
                       value_solution=vs_tail, market=market, t=t, x=x, d=d)


def immediate_close(grid: TimeGrid, t: float, x: float, d: float) -> Strategy:
    """Strategy that holds x until t, closes the whole position at t."""
    k = grid.index_of(t)
    values = np.zeros(grid.n_steps + 1)
    values[:k] = x
    blocks = np.zeros(grid.n_steps + 1, dtype=bool)
    blocks[k] = True
    blocks[-1] = True
    return Strategy(grid=grid, x_pre=x, values=values, is_block=blocks)


def counterexample_brownian(nu: float, market: MarketPath) -> Strategy:
    """Round trip riding a scaled Brownian motion, closed by a terminal block.

    X starts and ends flat: X_0 = 0, X_s = nu W_s in the interior, X_T = 0.
    The interior increments are samples of a continuous trading path, so
    only the terminal trade is a block.
    """
    grid = market.grid
    w_path = np.concatenate(([0.0], np.cumsum(market.w)))
    values = nu * w_path
    values[-1] = 0.0
    blocks = np.zeros(grid.n_steps + 1, dtype=bool)
    blocks[-1] = True
    return Strategy(grid=grid, x_pre=0.0, values=values, is_block=blocks)


def counterexample_gbm(nu: float, x: float, market: MarketPath) -> Strategy:
    """Geometric round trip driven by the market's own Brownian motion.

    X starts at x, follows exact geometric stepping exp(nu dW - nu^2 h / 2)
    in the interior, and is closed by a terminal block.  Its deviation must
    be computed with :func:`execlab.deviation.naive_deviation_path`: the
    construction exists to show that dropping the impact/strategy
    covariation makes the optimization ill-posed.
    """
    grid = market.grid
    h = grid.h
    log_incr = nu * market.w - 0.5 * nu**2 * h
    values = x * np.exp(np.concatenate(([0.0], np.cumsum(log_incr))))
    values[-1] = 0.0
    blocks = np.zeros(grid.n_steps + 1, dtype=bool)
    blocks[-1] = True
    return Strategy(grid=grid, x_pre=x, values=values, is_block=blocks)


@dataclass(frozen=True)
class JumpExample:
    """Drift switching from 0 to 1 at t0 with constant positive resilience."""

    rho: float
    t0: float


@dataclass(frozen=True)
class NegResExample:
    """Constant negative resilience offset by a positive drift."""

    rho: float
    mu: float


def example_beta_path(example, T: float, grid: TimeGrid) -> ValueSolution:
    """Closed-form value factor and feedback ratio for the two showcase regimes.

    JumpExample: y follows the constant-resilience hyperbola before t0 and
    the drifted branch after; the ratio jumps at t0 by y(t0)/(2 rho + 1).
    NegResExample: y(s) = mu (2 rho + mu) / 2 / ((rho+mu)^2 - rho^2 e^{mu(s-T)})
    and the ratio is (1, inf)-valued.
    """
    s = grid.times
    if isinstance(example, JumpExample):
        rho, t0 = example.rho, example.t0
        if not (0.0 < t0 < T) or rho <= 0.0:
            raise ValueError("requires 0 < t0 < T and rho > 0")
        upper = (2.0 * rho + 1.0) / (2.0 * (rho + 1.0) ** 2
                                     - 2.0 * rho**2 * np.exp(s - T))
        y_t0 = (2.0 * rho + 1.0) / (2.0 * (rho + 1.0) ** 2
                                    - 2.0 * rho**2 * math.exp(t0 - T))
        lower = 1.0 / (1.0 / y_t0 + (t0 - s) * rho)
        after = s >= t0 - 1e-12 * max(1.0, T)
        y = np.where(after, upper, lower)
        y[-1] = 0.5
        beta = np.where(after, y * (1.0 + 1.0 / (2.0 * rho + 1.0)), y)
        strictly_after = s > t0 + 1e-12 * max(1.0, T)
        beta_pre = np.where(strictly_after,
                            y * (1.0 + 1.0 / (2.0 * rho + 1.0)), y)
        return ValueSolution(grid=grid, y=y, z=np.zeros_like(y),
                             beta_tilde=beta, source="PiecewiseJump",
                             beta_pre=beta_pre)
    if isinstance(example, NegResExample):
        rho, mu = example.rho, example.mu
        if rho >= 0.0 or 2.0 * rho + mu <= 0.0:
            raise ValueError("requires rho < 0 and 2 rho + mu > 0")
        denom = (rho + mu) ** 2 - rho**2 * np.exp(mu * (s - T))
        y = 0.5 * mu * (2.0 * rho + mu) / denom
        y[-1] = 0.5
        beta = mu * (rho + mu) / denom
        return ValueSolution(grid=grid, y=y, z=np.zeros_like(y),
                             beta_tilde=beta, source="NegativeResilience")
    raise TypeError(f"unknown example spec: {example!r}")


def jump_example_model(rho: float, t0: float, T: float,
                       gamma0: float = 1.0) -> CoefficientModel:
    """Deterministic model whose drift switches from 0 to 1 at t0."""
    from .coefficients import build_model
    return build_model(T, gamma0, [
        {"t_from": 0.0, "rho": rho, "mu": 0.0, "sigma": 0.0},
        {"t_from": t0, "rho": rho, "mu": 1.0, "sigma": 0.0},
    ])


def negres_example_model(rho: float, mu: float, T: float,
                         gamma0: float = 1.0) -> CoefficientModel:
    """Deterministic model with negative resilience and positive drift."""
    from .coefficients import constant_model
    return constant_model(T, gamma0, rho, mu=mu, sigma=0.0)


def initial_block_classification(x: float, d: float, gamma0: float,
                                 beta0: float, tol: float = 1e-12) -> bool:
    """Whether the optimal plan opens with a block trade.

    The plan starts without a block trade exactly when the initial deviation
    sits at d = -beta0/(1-beta0) * gamma0 * x; equality is tested to ``tol``
    relative to the magnitudes involved.
    """
    if beta0 == 1.0:
        return x != 0.0  # immediate close of any nonzero position
    critical = -beta0 / (1.0 - beta0) * gamma0 * x
    scale = max(abs(d), abs(critical), abs(gamma0 * x), 1.0)
    return abs(d - critical) > tol * scale


def dynamic_consistency_check(plan: OptimalPlan, u: float) -> float:
    """Rebuild the plan from its own state just before u; compare the tails.

    Returns the maximum relative discrepancy over grid points, across both
    the position and the deviation paths.
    """
    k = plan.grid.index_of(u)
    if k == 0:
        return 0.0
    x_um = plan.scale * plan.exp_q[k] * (1.0 - plan.beta_pre[k])
    d_um = plan.d_star.pre_trade[k]
    replan = optimal_plan(plan.model, plan.value_solution, plan.market,
                          u, x_um, d_um)

    def rel(a, b):
        ref = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
        return np.max(np.abs(a - b)) / ref

    return float(max(rel(plan.x_star.values[k:], replan.x_star.values),
                     rel(plan.d_star.values[k:], replan.d_star.values)))
