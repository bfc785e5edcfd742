"""Market model: piecewise-constant coefficients, impact paths, stochastic exponentials.

The price impact factor gamma follows dgamma = gamma * (mu dt + sigma dW) and is
stepped by exact lognormal increments, so the only discretization error in the
engine comes from the trading scheme, never from gamma itself.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class ModelError(ValueError):
    """Raised for invalid market model specifications."""


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous piecewise-constant function of time on [0, T].

    ``breaks[i]`` is the left endpoint of piece ``i``; ``breaks[0]`` must be 0.
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breaks) != len(self.values) or not self.breaks:
            raise ModelError("breaks and values must be non-empty and equal length")
        if self.breaks[0] != 0.0:
            raise ModelError("first breakpoint must be 0")
        if any(b >= c for b, c in zip(self.breaks, self.breaks[1:])):
            raise ModelError("breakpoints must be strictly increasing")

    @staticmethod
    def constant(value: float) -> "PiecewiseConstant":
        return PiecewiseConstant((0.0,), (float(value),))

    def piece_index(self, t: float) -> int:
        # right-continuous: value on [breaks[i], breaks[i+1])
        return int(np.searchsorted(self.breaks, t, side="right") - 1)

    def __call__(self, t: float) -> float:
        return self.values[self.piece_index(t)]

    def integral(self, a: float, b: float) -> float:
        """Exact integral over [a, b] (a <= b)."""
        if b < a:
            raise ValueError("integration bounds out of order")
        total = 0.0
        edges = list(self.breaks) + [np.inf]
        for i, v in enumerate(self.values):
            lo = max(a, edges[i])
            hi = min(b, edges[i + 1])
            if hi > lo:
                total += v * (hi - lo)
        return total

    def sample(self, times: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breaks, times, side="right") - 1
        return np.asarray(self.values)[idx]


@dataclass(frozen=True)
class ConditionReport:
    """Which positivity/boundedness conditions the model satisfies."""

    positive: bool          # 2*rho + mu - sigma^2 > 0 on every piece
    epsilon: float          # attained min of 2*rho + mu - sigma^2
    bounded: bool           # always true for piecewise-constant coefficients
    rho_bound: float
    mu_bound: float
    sigma_bound: float


@dataclass(frozen=True)
class CoefficientModel:
    """Exogenous market inputs: horizon, initial impact and resilience/drift/vol."""

    T: float
    gamma0: float
    rho: PiecewiseConstant
    mu: PiecewiseConstant
    sigma: PiecewiseConstant

    def __post_init__(self):
        if self.T <= 0:
            raise ModelError("horizon T must be positive")
        if self.gamma0 <= 0:
            raise ModelError("gamma0 must be positive")
        if self.condition_report().epsilon <= 0.0:
            raise ModelError(
                "model violates the positivity condition: "
                "2*rho + mu - sigma^2 <= 0 on some piece"
            )

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = sorted(set(self.rho.breaks) | set(self.mu.breaks) | set(self.sigma.breaks))
        return tuple(p for p in pts if 0.0 < p < self.T)

    def condition_report(self) -> ConditionReport:
        pts = [0.0] + list(self.breakpoints)
        vals = [2.0 * self.rho(t) + self.mu(t) - self.sigma(t) ** 2 for t in pts]
        eps = min(vals)
        return ConditionReport(
            positive=eps > 0.0,
            epsilon=eps,
            bounded=True,
            rho_bound=max(abs(v) for v in self.rho.values),
            mu_bound=max(abs(v) for v in self.mu.values),
            sigma_bound=max(abs(v) for v in self.sigma.values),
        )

    def is_deterministic_impact(self) -> bool:
        return all(v == 0.0 for v in self.sigma.values)

    def to_dict(self) -> dict:
        pts = [0.0] + list(self.breakpoints)
        pieces = [
            {"t_from": t, "rho": self.rho(t), "mu": self.mu(t), "sigma": self.sigma(t)}
            for t in pts
        ]
        return {"T": self.T, "gamma0": self.gamma0, "pieces": pieces}

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def build_model(
    T: float,
    gamma0: float,
    pieces: Sequence[dict],
) -> CoefficientModel:
    """Build and validate a market model from coefficient pieces.

    Parameters
    ----------
    T, gamma0 : horizon and initial impact level, both positive.
    pieces : list of ``{"t_from": float, "rho": float, "mu": float, "sigma": float}``;
        the first piece must start at 0 and pieces must cover [0, T].

    Raises
    ------
    ModelError if 2*rho + mu - sigma^2 <= 0 on some piece.
    """
    if not pieces:
        raise ModelError("at least one coefficient piece is required")
    starts = [float(p["t_from"]) for p in pieces]
    if starts != sorted(starts) or len(set(starts)) != len(starts):
        raise ModelError("piece start times must be strictly increasing")
    if any(s >= T for s in starts[1:]):
        raise ModelError("piece start times must lie in [0, T)")
    breaks = tuple(starts)
    return CoefficientModel(
        T=float(T),
        gamma0=float(gamma0),
        rho=PiecewiseConstant(breaks, tuple(float(p["rho"]) for p in pieces)),
        mu=PiecewiseConstant(breaks, tuple(float(p["mu"]) for p in pieces)),
        sigma=PiecewiseConstant(breaks, tuple(float(p["sigma"]) for p in pieces)),
    )


def constant_model(T: float, gamma0: float, rho: float, mu: float = 0.0,
                   sigma: float = 0.0) -> CoefficientModel:
    """Convenience constructor for a single-piece model."""
    return build_model(T, gamma0, [{"t_from": 0.0, "rho": rho, "mu": mu, "sigma": sigma}])


def model_from_config(cfg: dict) -> CoefficientModel:
    """Read a model from the JSON config schema: T, gamma0, pieces."""
    return build_model(cfg["T"], cfg["gamma0"], cfg["pieces"])


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0 + k*h, k = 0..n_steps."""

    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ModelError("n_steps must be positive")
        if self.T <= self.t0:
            raise ModelError("grid end must exceed start")

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    def index_of(self, t: float) -> int:
        k = round((t - self.t0) / self.h)
        if not (0 <= k <= self.n_steps) or abs(self.t0 + k * self.h - t) > 1e-9 * max(1.0, self.T):
            raise ModelError(f"time {t} is not a grid point")
        return int(k)

    def validate_model(self, model: CoefficientModel) -> None:
        for b in model.breakpoints:
            if self.t0 <= b <= self.T:
                self.index_of(b)


@dataclass(frozen=True)
class MarketPath:
    """One realization of the Brownian driver and the impact factor on a grid."""

    grid: TimeGrid
    w: np.ndarray        # Brownian increments per step, length n_steps
    gamma: np.ndarray    # impact per grid point, length n_steps + 1
    alpha: np.ndarray    # 1/gamma per grid point
    path_id: int
    master_seed: int

    def tail(self, k: int) -> "MarketPath":
        """Sub-path on the grid starting at grid index k."""
        g = self.grid
        sub = TimeGrid(g.t0 + k * g.h, g.T, g.n_steps - k)
        return MarketPath(sub, self.w[k:], self.gamma[k:], self.alpha[k:],
                          self.path_id, self.master_seed)


def _path_rng(master_seed: int, path_id: int) -> np.random.Generator:
    # pure function of (master_seed, path_id): reproducible regardless of
    # execution order or thread count
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), int(path_id))))


def simulate_path(model: CoefficientModel, grid: TimeGrid, master_seed: int,
                  path_id: int) -> MarketPath:
    """Simulate one impact path with exact lognormal stepping."""
    grid.validate_model(model)
    n = grid.n_steps
    h = grid.h
    t_left = grid.times[:-1]
    mu = model.mu.sample(t_left)
    sig = model.sigma.sample(t_left)
    # the Brownian driver is always drawn: strategies may use it even when
    # the impact factor itself is deterministic (sigma == 0)
    dw = _path_rng(master_seed, path_id).standard_normal(n) * np.sqrt(h)
    log_incr = (mu - 0.5 * sig**2) * h + sig * dw
    log_gamma = np.concatenate(([0.0], np.cumsum(log_incr)))
    # grid may start at t0 > 0; gamma0 is the level at grid start
    gamma = model.gamma0 * np.exp(log_gamma) if grid.t0 == 0.0 else \
        model.gamma0 * np.exp(model.mu.integral(0.0, grid.t0)) * np.exp(log_gamma)
    return MarketPath(grid=grid, w=dw, gamma=gamma, alpha=1.0 / gamma,
                      path_id=path_id, master_seed=master_seed)


def iter_market_paths(model: CoefficientModel, grid: TimeGrid, n_paths: int,
                      master_seed: int) -> Iterator[MarketPath]:
    """Lazily yield independent market paths (memory-friendly for large runs)."""
    if n_paths < 1:
        raise ModelError("n_paths must be >= 1")
    for i in range(n_paths):
        yield simulate_path(model, grid, master_seed, i)


def simulate_market(model: CoefficientModel, grid: TimeGrid, n_paths: int,
                    master_seed: int) -> list[MarketPath]:
    """Simulate n_paths independent impact paths."""
    return list(iter_market_paths(model, grid, n_paths, master_seed))


def stochastic_exponential(q_increments: np.ndarray,
                           q_quadratic: np.ndarray) -> np.ndarray:
    """Doleans-Dade exponential of a continuous semimartingale on a grid.

    Given per-step increments of Q and of its quadratic variation, returns the
    path exp(sum dQ - 0.5 * sum d[Q]) of length ``len(q_increments) + 1``,
    starting at 1.
    """
    dq = np.asarray(q_increments, dtype=float)
    dqv = np.asarray(q_quadratic, dtype=float)
    if dq.shape != dqv.shape:
        raise ValueError("increment arrays must share a grid")
    expo = np.concatenate(([0.0], np.cumsum(dq - 0.5 * dqv)))
    return np.exp(expo)
