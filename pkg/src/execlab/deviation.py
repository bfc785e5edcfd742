"""Deviation dynamics for grid strategies.

The price deviation D decays at rate rho between trades and jumps by
gamma * (trade size) at a trade.  The recursion used here is the discrete
scheme whose continuous limit carries the impact/strategy covariation term,
because each trade is charged at the *current* impact level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientModel, MarketPath, TimeGrid


class GridMismatch(ValueError):
    """Strategy, deviation and market must share one grid."""


@dataclass(frozen=True)
class Strategy:
    """Grid-sampled cadlag execution strategy.

    ``values[k]`` is the position right after trading at grid point k; the
    pre-initial position is ``x_pre`` and the terminal value must be 0.
    ``is_block[k]`` marks grid trades that are genuine block trades (jumps);
    unmarked trades are samples of a continuous trading path.  The flag only
    matters for the uncorrected cost functional.
    """

    grid: TimeGrid
    x_pre: float
    values: np.ndarray
    is_block: np.ndarray | None = None

    def __post_init__(self):
        if len(self.values) != self.grid.n_steps + 1:
            raise GridMismatch("strategy values must cover every grid point")
        if self.values[-1] != 0.0:
            raise ValueError("terminal position must be 0 (liquidation constraint)")
        if self.is_block is not None and len(self.is_block) != len(self.values):
            raise GridMismatch("block flags must cover every grid point")

    @property
    def trades(self) -> np.ndarray:
        """Trade sizes xi_k = X_k - X_{k-1}, with X_{-1} = x_pre."""
        return np.diff(self.values, prepend=self.x_pre)

    def block_mask(self) -> np.ndarray:
        if self.is_block is None:
            return np.ones(len(self.values), dtype=bool)
        return self.is_block


@dataclass(frozen=True)
class DeviationPath:
    """Deviation along a strategy: values after and before each grid trade."""

    grid: TimeGrid
    d_pre: float
    values: np.ndarray        # deviation right after the trade at grid point k
    pre_trade: np.ndarray     # deviation right before the trade at grid point k
    impact_state: np.ndarray  # A_k = X_k - alpha_k * D_k


def _check_shared_grid(*grids: TimeGrid) -> None:
    g0 = grids[0]
    for g in grids[1:]:
        if g != g0:
            raise GridMismatch("operands are defined on different grids")


def deviation_path(model: CoefficientModel, market: MarketPath,
                   strategy: Strategy, d_pre: float = 0.0) -> DeviationPath:
    """Deviation process of a grid strategy.

    Between grid points the deviation decays by the exact factor
    exp(-integral of rho); at grid point k it jumps by gamma_k * xi_k.
    """
    _check_shared_grid(market.grid, strategy.grid)
    grid = strategy.grid
    h = grid.h
    t_left = grid.times[:-1]
    # exact per-step resilience integrals (rho is constant on each step)
    r_steps = model.rho.sample(t_left) * h
    r_cum = np.concatenate(([0.0], np.cumsum(r_steps)))
    eta = np.exp(-r_cum)

    xi = strategy.trades
    weighted = market.gamma * np.exp(r_cum) * xi
    cum = d_pre + np.cumsum(weighted)
    pre_trade = np.empty_like(cum)
    pre_trade[0] = d_pre
    pre_trade[1:] = eta[1:] * cum[:-1]
    values = pre_trade + market.gamma * xi
    impact_state = strategy.values - market.alpha * values
    return DeviationPath(grid=grid, d_pre=d_pre, values=values,
                         pre_trade=pre_trade, impact_state=impact_state)


def naive_deviation_path(model: CoefficientModel, market: MarketPath,
                         strategy: Strategy, d_pre: float = 0.0) -> DeviationPath:
    """Deviation under the uncorrected dynamics dD = -rho D dt + gamma dX.

    Trades that are not block trades are treated as increments of a continuous
    trading path and charged at the impact level of the *previous* grid point
    (Ito convention), so no covariation term appears in the limit.  Only used
    to reproduce the geometric-Brownian ill-posedness construction.
    """
    _check_shared_grid(market.grid, strategy.grid)
    grid = strategy.grid
    h = grid.h
    r_steps = model.rho.sample(grid.times[:-1]) * h
    r_cum = np.concatenate(([0.0], np.cumsum(r_steps)))
    eta = np.exp(-r_cum)
    xi = strategy.trades
    blocks = strategy.block_mask()
    gamma_eff = np.where(blocks, market.gamma,
                         np.concatenate(([market.gamma[0]], market.gamma[:-1])))

    cum = d_pre + np.cumsum(gamma_eff * np.exp(r_cum) * xi)
    pre_trade = np.empty_like(cum)
    pre_trade[0] = d_pre
    pre_trade[1:] = eta[1:] * cum[:-1]
    values = pre_trade + gamma_eff * xi
    impact_state = strategy.values - market.alpha * values
    return DeviationPath(grid=grid, d_pre=d_pre, values=values,
                         pre_trade=pre_trade, impact_state=impact_state)


def impact_state(strategy: Strategy, deviation: DeviationPath,
                 market: MarketPath) -> np.ndarray:
    """A = X - alpha * D per grid point (continuous across block trades)."""
    _check_shared_grid(strategy.grid, deviation.grid, market.grid)
    return strategy.values - market.alpha * deviation.values


@dataclass(frozen=True)
class AdmissibilityReport:
    """Monte Carlo estimates of the three admissibility integrals at t = 0.

    These are sample estimates of conditional expectations; finite sampling
    cannot certify admissibility, so this is a diagnostic, not a proof.
    """

    sup_moment: tuple[float, float]        # E[sup gamma^2 A^4]: (mean, stderr)
    impact_integral: tuple[float, float]   # E[(int gamma^2 A^4 sigma^2 dt)^(1/2)]
    deviation_integral: tuple[float, float]  # E[(int D^4 alpha^2 sigma^2 dt)^(1/2)]
    n_paths: int
    diagnostic_only: bool = True


def admissibility_diagnostics(model: CoefficientModel, markets, strategy_factory,
                              d_pre: float = 0.0) -> AdmissibilityReport:
    """Estimate the admissibility integrals for a strategy family over paths."""
    a1, a2, a3 = [], [], []
    for market in markets:
        strat = strategy_factory(market)
        dev = deviation_path(model, market, strat, d_pre)
        h = strat.grid.h
        sig = model.sigma.sample(strat.grid.times)
        a_state = dev.impact_state
        g2a4 = market.gamma**2 * a_state**4
        a1.append(np.max(g2a4))
        a2.append(np.sqrt(np.sum(g2a4[:-1] * sig[:-1] ** 2) * h))
        a3.append(np.sqrt(np.sum(dev.values[:-1] ** 4 * market.alpha[:-1] ** 2
                                 * sig[:-1] ** 2) * h))
    n = len(a1)
    if n < 100:
        raise ValueError("admissibility diagnostics need at least 100 paths")

    def stats(xs):
        arr = np.asarray(xs)
        return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(n))

    return AdmissibilityReport(sup_moment=stats(a1), impact_integral=stats(a2),
                               deviation_integral=stats(a3), n_paths=n)
