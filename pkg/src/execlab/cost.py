"""Execution cost functionals: pathwise costs, Monte Carlo estimates, value formula.

The corrected cost charges gamma/2 times the squared size of *every* grid
trade, so the quadratic variation of a continuous trading path is priced in
the limit.  The uncorrected ("naive") cost charges the quadratic term only on
marked block trades and exists solely to reproduce the ill-posedness
constructions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coefficients import (CoefficientModel, MarketPath, TimeGrid,
                           iter_market_paths)
from .deviation import (DeviationPath, Strategy, _check_shared_grid,
                        deviation_path, naive_deviation_path)


@dataclass(frozen=True)
class CostEstimate:
    """Monte Carlo cost estimate across independent market paths."""

    mean: float
    std_error: float
    n_paths: int
    h: float
    seed: int | None = None
    model_hash: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {"mean": self.mean, "std_error": self.std_error,
             "n_paths": self.n_paths, "h": self.h, "seed": self.seed,
             "model_hash": self.model_hash},
            sort_keys=True)


@dataclass(frozen=True)
class ValueQuote:
    """Minimal expected cost V = (y/gamma)(d - gamma x)^2 - d^2/(2 gamma)."""

    v: float
    y_t: float
    gamma_t: float
    x: float
    d: float


def pathwise_cost(strategy: Strategy, deviation: DeviationPath,
                  market: MarketPath) -> float:
    """Realized cost sum_k (D_pre_k + gamma_k/2 * xi_k) * xi_k on one path."""
    _check_shared_grid(strategy.grid, deviation.grid, market.grid)
    xi = strategy.trades
    return float(np.sum((deviation.pre_trade + 0.5 * market.gamma * xi) * xi))


def pathwise_cost_naive(strategy: Strategy, deviation: DeviationPath,
                        market: MarketPath) -> float:
    """Uncorrected cost: the gamma/2 * xi^2 charge applies to block trades only.

    For pure-jump (finite-variation) grid strategies every trade is a block,
    so this coincides with :func:`pathwise_cost` path by path.
    """
    _check_shared_grid(strategy.grid, deviation.grid, market.grid)
    xi = strategy.trades
    blocks = strategy.block_mask()
    linear = np.sum(deviation.pre_trade * xi)
    quadratic = 0.5 * np.sum(market.gamma[blocks] * xi[blocks] ** 2)
    return float(linear + quadratic)


def estimate_cost(model: CoefficientModel, grid: TimeGrid, n_paths: int,
                  seed: int,
                  strategy_factory: Callable[[MarketPath], Strategy],
                  d_pre: float = 0.0, naive: bool = False,
                  naive_dynamics: bool = False) -> CostEstimate:
    """Sample mean and standard error of pathwise costs over independent paths.

    ``naive`` switches the cost functional, ``naive_dynamics`` the deviation
    dynamics (no covariation term); both default to the corrected model.
    """
    if n_paths < 2:
        raise ValueError("need at least 2 paths for a standard error")
    costs = np.empty(n_paths)
    dev_fn = naive_deviation_path if naive_dynamics else deviation_path
    cost_fn = pathwise_cost_naive if naive else pathwise_cost
    for i, market in enumerate(iter_market_paths(model, grid, n_paths, seed)):
        strat = strategy_factory(market)
        dev = dev_fn(model, market, strat, d_pre)
        costs[i] = cost_fn(strat, dev, market)
    mean = float(np.sum(costs) / n_paths)  # numpy pairwise sum: reproducible
    var = float(np.sum((costs - mean) ** 2) / (n_paths - 1))
    return CostEstimate(mean=mean, std_error=float(np.sqrt(var / n_paths)),
                        n_paths=n_paths, h=grid.h, seed=seed,
                        model_hash=model.content_hash())


def value_function(y_t: float, gamma_t: float, x: float, d: float) -> ValueQuote:
    """Closed-form minimal expected cost given the value factor y_t."""
    if gamma_t <= 0:
        raise ValueError("gamma_t must be positive")
    v = (y_t / gamma_t) * (d - gamma_t * x) ** 2 - d**2 / (2.0 * gamma_t)
    return ValueQuote(v=float(v), y_t=y_t, gamma_t=gamma_t, x=x, d=d)


def quadratic_representation_rhs(model: CoefficientModel, value_solution,
                                 market: MarketPath, strategy: Strategy,
                                 deviation: DeviationPath,
                                 x: float, d: float) -> float:
    """Pathwise right-hand side of the quadratic cost representation.

    Closed first part V(t, x, d) plus the left-endpoint Riemann sum of
    (1/gamma) (beta~ (gamma X - D) + D)^2 (sigma^2 Y + (2 rho + mu - sigma^2)/2).
    Averaged over paths this reproduces the expected cost of the strategy.
    """
    _check_shared_grid(strategy.grid, market.grid, deviation.grid,
                       value_solution.grid)
    grid = strategy.grid
    h = grid.h
    t = grid.times
    rho = model.rho.sample(t[:-1])
    mu = model.mu.sample(t[:-1])
    sig = model.sigma.sample(t[:-1])
    y = value_solution.y[:-1]
    beta = value_solution.beta_tilde[:-1]
    gx = market.gamma[:-1] * strategy.values[:-1]
    dv = deviation.values[:-1]
    integrand = (1.0 / market.gamma[:-1]) * (beta * (gx - dv) + dv) ** 2 \
        * (sig**2 * y + 0.5 * (2.0 * rho + mu - sig**2))
    head = value_function(value_solution.y[0], market.gamma[0], x, d).v
    return float(head + np.sum(integrand) * h)


def closed_form_naive_brownian(gamma: float, rho: float, T: float,
                               nu: float) -> float:
    """Expected uncorrected cost of the scaled-Brownian round trip.

    Equals (gamma nu^2 / rho) (exp(-rho T) - 1 + rho T / 2); negative for all
    nu != 0 whenever rho in (0, 1/T).
    """
    if rho == 0.0:
        raise ValueError("rho = 0 not admitted by the closed form")
    return (gamma * nu**2 / rho) * (np.exp(-rho * T) - 1.0 + 0.5 * rho * T)


def closed_form_cost_gbm(gamma0: float, x: float, sigma: float, rho: float,
                         T: float, nu: float) -> float:
    """Expected cost of the geometric-Brownian strategy under naive deviation
    dynamics: (gamma0 x^2 / 2) (I1(nu) - I2(nu)).

    The displayed form has removable singularities at nu = 0, nu = -2 sigma
    and nu^2 + 2 sigma nu + rho = 0; those inputs are rejected.
    """
    if 2.0 * rho - sigma**2 <= 0.0:
        raise ValueError("requires 2 rho - sigma^2 > 0")
    a = nu**2 + 2.0 * sigma * nu
    b = a + rho
    if nu == 0.0 or nu == -2.0 * sigma:
        raise ValueError(f"nu = {nu} is a removable singularity of the "
                         "displayed formula; evaluate nearby instead")
    if b == 0.0:
        raise ValueError("nu^2 + 2 sigma nu + rho = 0 is a removable "
                         "singularity of the displayed formula")
    i1 = np.exp(a * T) * (nu**2 / a - 2.0 * nu**2 / b + 1.0)
    i2 = nu**2 / a - 2.0 * nu**2 * np.exp(-rho * T) / b
    return float(0.5 * gamma0 * x**2 * (i1 - i2))
