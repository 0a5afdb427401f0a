"""Integrand families with pathwise values, conditional forecasts, and norms.

Every integrand exposes three views of the same process: the pathwise value
gamma(t), the conditional expectation E_tau gamma(t) given the driving noise
up to tau, and the deterministic forecast-variance profile E Var_tau gamma(t).
Conditioning is implemented by truncating stochastic integrals at tau, so it
is measurable by construction.

The provided family covers deterministic functions, the driving Brownian
motion, fractional Brownian motion (and its windowed Riemann-Liouville
variant), the squared Brownian path, and piecewise-predictable freezes of
any of those: processes that on each segment of a grid are measurable at
the segment's left endpoint.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .kernels import HALF, HurstParameter, hurst_constant
from .noise import (
    NoiseBatch,
    NoisePath,
    SimulationGrid,
    avg_kernel_table,
    causal_conv,
)

__all__ = [
    "Integrand",
    "DeterministicIntegrand",
    "BrownianIntegrand",
    "FbmIntegrand",
    "RlFbmIntegrand",
    "QuadraticBrownianIntegrand",
    "PiecewisePredictableIntegrand",
    "SegmentGrid",
    "dyadic_projection",
    "x_norm",
    "y_norm",
    "YNormResult",
]


class IntegrandCapabilityError(NotImplementedError):
    """Raised when an integrand lacks a conditional-expectation rule."""


def _incs_of(noise) -> np.ndarray:
    return noise.increments if hasattr(noise, "increments") else np.asarray(noise)


def fine_cell_times(grid: SimulationGrid) -> np.ndarray:
    """Left edges of the cells partitioning [0, horizon)."""
    return grid.step * np.arange(grid.main_steps)


class Integrand(ABC):
    """Contract: value(t), E_tau gamma(t), and deterministic E Var_tau gamma(t)."""

    #: gamma(t) is measurable at t - predictability_eps (None: not known)
    predictability_eps: float | None = None
    #: known forecast-variance growth exponent nu (E Var_tau ~ (t-tau)^(1+nu))
    nu_exponent: float | None = None
    has_cond_exp: bool = True

    @abstractmethod
    def value(self, t: float, noise: NoisePath) -> float: ...

    def cond_exp(self, tau: float, t: float, noise: NoisePath) -> float:
        raise IntegrandCapabilityError(f"{type(self).__name__} has no conditional-expectation rule")

    def cond_var(self, tau: float, t: float) -> float:
        raise IntegrandCapabilityError(f"{type(self).__name__} has no conditional-variance rule")

    def second_moment(self, t: float) -> float | None:
        """Closed-form E gamma(t)^2 where available."""
        return None

    # --- vectorized engine hooks (incs: (..., cell_count)) ------------------

    @abstractmethod
    def values_on_cells(self, grid: SimulationGrid, incs: np.ndarray) -> np.ndarray:
        """gamma at the left edge of every cell of [0, horizon)."""

    def frozen_values_on_cells(self, grid: SimulationGrid, incs: np.ndarray,
                               freeze_idx: np.ndarray) -> np.ndarray:
        """E at lattice time freeze_idx[l] of gamma at cell l's left edge."""
        raise IntegrandCapabilityError(f"{type(self).__name__} has no conditional-expectation rule")

    def segment_predictable_on(self, breakpoints: Sequence[float]) -> bool:
        """Whether gamma(t) is measurable at the active left endpoint of this grid."""
        return False

    def spec_string(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class DeterministicIntegrand(Integrand):
    """A non-random integrand; conditioning is vacuous and the variance is 0."""

    fn: Callable[[np.ndarray], np.ndarray]
    label: str = "det"

    predictability_eps = math.inf
    nu_exponent = math.inf

    @staticmethod
    def constant(c: float) -> "DeterministicIntegrand":
        return DeterministicIntegrand(fn=lambda t, c=float(c): np.full_like(np.asarray(t, dtype=float), c),
                                      label=f"det:const:{c!r}")

    @staticmethod
    def polynomial(coeffs: Sequence[float]) -> "DeterministicIntegrand":
        cs = tuple(float(a) for a in coeffs)
        return DeterministicIntegrand(fn=lambda t, cs=cs: np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), cs),
                                      label="det:poly:" + ",".join(repr(a) for a in cs))

    def value(self, t, noise=None):
        return float(self.fn(np.asarray(t, dtype=float)))

    def cond_exp(self, tau, t, noise=None):
        return self.value(t, noise)

    def cond_var(self, tau, t):
        return 0.0

    def second_moment(self, t):
        return self.value(t, None) ** 2

    def values_on_cells(self, grid, incs):
        vals = self.fn(fine_cell_times(grid))
        return np.broadcast_to(vals, incs.shape[:-1] + vals.shape).copy()

    def frozen_values_on_cells(self, grid, incs, freeze_idx):
        return self.values_on_cells(grid, incs)

    def segment_predictable_on(self, breakpoints):
        return True

    def spec_string(self):
        return self.label


def _local_run_conv(x: np.ndarray, table: np.ndarray, a: int, b: int) -> np.ndarray:
    """local[j - a] = sum_{a <= i < j} table[j - i] x[..., i] for j = a..b-1."""
    ell = b - a
    out = np.zeros(x.shape[:-1] + (ell,))
    if ell > 1:
        out[..., 1:] = causal_conv(x[..., a:b - 1], table[:ell])[..., 1:ell]
    return out


class _PowerKernelIntegrand(Integrand):
    """Shared machinery for Wiener integrals of power kernels (t - r)^(h1 - 1/2)."""

    def __init__(self, hp1: HurstParameter, include_history: bool, start: float = 0.0):
        self.hp1 = hp1
        self.include_history = include_history
        self.start = float(start)
        self.nu_exponent = 2.0 * hp1.h - 1.0

    # -- scalar ---------------------------------------------------------------

    def _weights(self, grid: SimulationGrid, t: float, tau: float | None) -> np.ndarray:
        """Cell-averaged kernel weights for E_tau gamma(t) (tau=None: pathwise)."""
        edges = grid.edges()
        hi = t if tau is None else min(t, tau)
        lo = grid.warmup_start if self.include_history else max(self.start, grid.warmup_start)
        p1 = self.hp1.h + HALF
        a = np.clip(edges[:-1], lo, hi)
        b = np.clip(edges[1:], lo, hi)
        w = ((t - a) ** p1 - (t - b) ** p1) / (p1 * grid.step)
        if self.include_history:
            a0 = np.clip(edges[:-1], grid.warmup_start, 0.0)
            b0 = np.clip(edges[1:], grid.warmup_start, 0.0)
            w = w - ((0.0 - a0) ** p1 - (0.0 - b0) ** p1) / (p1 * grid.step)
        return self.hp1.c_h * w

    def value(self, t, noise):
        return float(np.dot(self._weights(noise.grid, t, None), _incs_of(noise)))

    def cond_exp(self, tau, t, noise):
        return float(np.dot(self._weights(noise.grid, t, tau), _incs_of(noise)))

    def cond_var(self, tau, t):
        lo = max(tau, self.start) if not self.include_history else tau
        span = max(t - lo, 0.0)
        h1 = self.hp1.h
        return self.hp1.c_h ** 2 * span ** (2 * h1) / (2 * h1)

    # -- vectorized -----------------------------------------------------------

    def _mask_from(self, grid: SimulationGrid) -> int:
        return 0 if self.include_history else grid.index_of(self.start)

    def _full_prefix(self, grid: SimulationGrid, incs: np.ndarray) -> np.ndarray:
        if self.include_history and not self.hp1.is_brownian and grid.origin_index == 0:
            raise ValueError("empty warmup window with h1 > 1/2: truncation error uncontrolled")
        start = self._mask_from(grid)
        sel = incs
        if start > 0:
            sel = np.zeros_like(incs)
            sel[..., start:] = incs[..., start:]
        if self.hp1.is_brownian:
            out = np.zeros(sel.shape[:-1] + (grid.cell_count + 1,))
            np.cumsum(sel, axis=-1, out=out[..., 1:])
            return out
        table = avg_kernel_table(self.hp1, grid.cell_count, grid.step)
        return self.hp1.c_h * causal_conv(sel, table)

    def _origin_offset(self, grid: SimulationGrid, prefix: np.ndarray) -> np.ndarray:
        if self.include_history:
            return prefix[..., grid.origin_index:grid.origin_index + 1]
        return np.zeros(prefix.shape[:-1] + (1,))

    def values_on_cells(self, grid, incs):
        prefix = self._full_prefix(grid, incs)
        m0 = grid.origin_index
        return prefix[..., m0:grid.cell_count] - self._origin_offset(grid, prefix)

    def frozen_values_on_cells(self, grid, incs, freeze_idx):
        prefix = self._full_prefix(grid, incs)
        m0 = grid.origin_index
        out = prefix[..., m0:grid.cell_count] - self._origin_offset(grid, prefix)
        if self.hp1.is_brownian:
            # kernel == 1: E_tau gamma(t) is just the prefix at the freeze time
            return prefix[..., np.asarray(freeze_idx)] - self._origin_offset(grid, prefix)
        table = self.hp1.c_h * avg_kernel_table(self.hp1, grid.cell_count, grid.step)
        start = self._mask_from(grid)
        runs = _runs_of(freeze_idx)
        for a, cell_lo, cell_hi in runs:
            lo = max(a, start)
            j_hi = m0 + cell_hi
            if lo >= j_hi:
                continue
            local = _local_run_conv(incs, table, lo, j_hi)
            first = max(cell_lo, lo - m0)
            out[..., first:cell_hi] -= local[..., (m0 + first) - lo:]
        return out

    def spec_string(self):
        if self.include_history:
            return f"fbm:{self.hp1.h!r}"
        if self.hp1.is_brownian:
            return "bm"
        return f"rl:{self.hp1.h!r}:{self.start!r}"


def _runs_of(freeze_idx: np.ndarray) -> list[tuple[int, int, int]]:
    """(freeze lattice index, first cell, one-past-last cell) per constant run."""
    freeze_idx = np.asarray(freeze_idx)
    if freeze_idx.size == 0:
        return []
    change = np.flatnonzero(np.diff(freeze_idx)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [freeze_idx.size]])
    return [(int(freeze_idx[s]), int(s), int(e)) for s, e in zip(starts, ends)]


class BrownianIntegrand(_PowerKernelIntegrand):
    """The driving Brownian motion itself, gamma(t) = B(t), B(0) = 0."""

    def __init__(self):
        super().__init__(hurst_constant(HALF), include_history=False, start=0.0)
        self.nu_exponent = 0.0

    def second_moment(self, t):
        return float(t)

    def spec_string(self):
        return "bm"


class FbmIntegrand(_PowerKernelIntegrand):
    """gamma(t) = B_H1(t), the synthesized fBm over the shared driver."""

    def __init__(self, h1: float):
        super().__init__(hurst_constant(h1), include_history=True)

    def second_moment(self, t):
        return float(t) ** (2 * self.hp1.h)

    def spec_string(self):
        return f"fbm:{self.hp1.h!r}"


class RlFbmIntegrand(_PowerKernelIntegrand):
    """Riemann-Liouville fBm: the moving average started at a fixed time.

    gamma(t) = c_h1 int_start^t (t - r)^(h1 - 1/2) dB(r); this is the
    within-segment smooth component of the fBm increment decomposition.
    """

    def __init__(self, h1: float, start: float = 0.0):
        super().__init__(hurst_constant(h1), include_history=False, start=start)

    def second_moment(self, t):
        return self.cond_var(-math.inf, t)


class QuadraticBrownianIntegrand(Integrand):
    """gamma(t) = B(t)^2: square-integrable, non-Gaussian, forecastable at rate nu = 0."""

    nu_exponent = 0.0

    def _prefix(self, grid, incs):
        m0 = grid.origin_index
        out = np.zeros(incs.shape[:-1] + (grid.cell_count + 1 - m0,))
        np.cumsum(incs[..., m0:], axis=-1, out=out[..., 1:])
        return out

    def _b_at(self, t, noise):
        g = noise.grid
        m0 = g.origin_index
        idx = g.index_of(min(max(t, 0.0), g.horizon))
        return float(np.sum(_incs_of(noise)[..., m0:idx], axis=-1))

    def value(self, t, noise):
        return self._b_at(t, noise) ** 2

    def cond_exp(self, tau, t, noise):
        tau = min(tau, t)
        return self._b_at(tau, noise) ** 2 + (t - tau)

    def cond_var(self, tau, t):
        tau = min(max(tau, 0.0), t)
        return 4.0 * tau * (t - tau) + 2.0 * (t - tau) ** 2

    def second_moment(self, t):
        return 3.0 * float(t) ** 2

    def values_on_cells(self, grid, incs):
        return self._prefix(grid, incs)[..., :-1] ** 2

    def frozen_values_on_cells(self, grid, incs, freeze_idx):
        prefix = self._prefix(grid, incs)
        m0 = grid.origin_index
        freeze_idx = np.asarray(freeze_idx)
        t_cells = fine_cell_times(grid)
        t_freeze = (freeze_idx - m0) * grid.step
        return prefix[..., freeze_idx - m0] ** 2 + (t_cells - t_freeze)

    def spec_string(self):
        return "bm2"


@dataclass(frozen=True)
class SegmentGrid:
    """Ordered breakpoints T_0 < ... < T_n with the minimum spacing recorded."""

    breakpoints: tuple[float, ...]
    min_spacing: float

    def __post_init__(self):
        if len(self.breakpoints) < 2:
            raise ValueError("need at least two breakpoints")
        gaps = np.diff(self.breakpoints)
        if np.any(gaps <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.min_spacing <= 0.0 or gaps.min() < self.min_spacing * (1 - 1e-12):
            raise ValueError("min_spacing must be positive and no larger than the smallest gap")

    @staticmethod
    def from_breakpoints(points: Sequence[float]) -> "SegmentGrid":
        pts = tuple(float(p) for p in points)
        gaps = np.diff(pts)
        if len(pts) < 2 or np.any(gaps <= 0.0):
            raise ValueError("breakpoints must be strictly increasing with >= 2 entries")
        return SegmentGrid(breakpoints=pts, min_spacing=float(gaps.min()))

    @staticmethod
    def dyadic(horizon: float, level: int) -> "SegmentGrid":
        """T_k = k * horizon / 2^level."""
        if level < 0:
            raise ValueError("level must be >= 0")
        n = 2 ** level
        pts = tuple(horizon * k / n for k in range(n + 1))
        return SegmentGrid(breakpoints=pts, min_spacing=horizon / n)

    @staticmethod
    def uniform(horizon: float, n_segments: int) -> "SegmentGrid":
        if n_segments < 1:
            raise ValueError("need at least one segment")
        pts = tuple(horizon * k / n_segments for k in range(n_segments + 1))
        return SegmentGrid(breakpoints=pts, min_spacing=horizon / n_segments)

    @property
    def n_segments(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def start(self) -> float:
        return self.breakpoints[0]

    @property
    def end(self) -> float:
        return self.breakpoints[-1]


class PiecewisePredictableIntegrand(Integrand):
    """inner frozen at segment starts: gamma(t) = E_{T_k} inner(t) on [T_k, T_{k+1}).

    Constant-information (not constant-value) on each segment, measurable at
    each segment's left endpoint.
    """

    def __init__(self, inner: Integrand, grid: SegmentGrid):
        if not inner.has_cond_exp:
            raise IntegrandCapabilityError("inner integrand has no conditional-expectation rule")
        self.inner = inner
        self.grid = grid
        self.predictability_eps = grid.min_spacing
        self.nu_exponent = None

    def freeze_time(self, t: float) -> float:
        bps = self.grid.breakpoints
        k = int(np.searchsorted(bps, t, side="right")) - 1
        k = min(max(k, 0), len(bps) - 2)
        return bps[k]

    def value(self, t, noise):
        return self.inner.cond_exp(self.freeze_time(t), t, noise)

    def cond_exp(self, tau, t, noise):
        return self.inner.cond_exp(min(tau, self.freeze_time(t)), t, noise)

    def cond_var(self, tau, t):
        f = self.freeze_time(t)
        if tau >= f:
            return 0.0
        return max(self.inner.cond_var(tau, t) - self.inner.cond_var(f, t), 0.0)

    def second_moment(self, t):
        base = self.inner.second_moment(t)
        if base is None:
            return None
        return base - self.inner.cond_var(self.freeze_time(t), t)

    def freeze_index_per_cell(self, grid: SimulationGrid) -> np.ndarray:
        t_cells = fine_cell_times(grid)
        bps = np.asarray(self.grid.breakpoints)
        k = np.clip(np.searchsorted(bps, t_cells, side="right") - 1, 0, len(bps) - 2)
        return np.array([grid.index_of(bps[i]) for i in range(len(bps))])[k]

    def values_on_cells(self, grid, incs):
        return self.inner.frozen_values_on_cells(grid, incs, self.freeze_index_per_cell(grid))

    def frozen_values_on_cells(self, grid, incs, freeze_idx):
        own = self.freeze_index_per_cell(grid)
        return self.inner.frozen_values_on_cells(grid, incs, np.minimum(own, freeze_idx))

    def segment_predictable_on(self, breakpoints):
        host = set(float(b) for b in breakpoints)
        return all(float(b) in host or b <= breakpoints[0] for b in self.grid.breakpoints[:-1]) \
            and self.grid.breakpoints[0] <= breakpoints[0] + 1e-12

    def spec_string(self):
        return f"pp:{self.inner.spec_string()}:{self.grid.n_segments}"


def dyadic_projection(gamma: Integrand, n: int, noise=None) -> Integrand:
    """Project gamma onto the dyadic piecewise-predictable class at level n.

    Returns gamma_n(t) = E_{T_k} gamma(t) for t in [T_k, T_{k+1}), T_k = k T / 2^n.
    Deterministic integrands are returned unchanged.
    """
    if n < 0:
        raise ValueError("level must be >= 0")
    if not gamma.has_cond_exp:
        raise IntegrandCapabilityError("integrand has no conditional-expectation rule")
    if isinstance(gamma, DeterministicIntegrand):
        return gamma
    if noise is None:
        raise ValueError("a noise path (or simulation grid) fixes the horizon of the dyadic grid")
    grid = noise if isinstance(noise, SimulationGrid) else noise.grid
    if grid.main_steps % (2 ** n) != 0:
        raise ValueError(f"2^{n} dyadic segments do not align with {grid.main_steps} fine steps")
    return PiecewisePredictableIntegrand(gamma, SegmentGrid.dyadic(grid.horizon, n))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def x_norm(gamma: Integrand, ensemble) -> tuple[float, float]:
    """MC estimate of (E int_0^T gamma^2 dt)^(1/2) with its standard error."""
    if isinstance(ensemble, NoiseBatch):
        grid, incs = ensemble.grid, ensemble.increments
    else:
        paths = list(ensemble)
        if len(paths) < 2:
            raise ValueError("need an ensemble of at least 2 noise paths")
        grid = paths[0].grid
        incs = np.stack([p.increments for p in paths])
    if incs.shape[0] < 2:
        raise ValueError("need an ensemble of at least 2 noise paths")
    vals = gamma.values_on_cells(grid, incs)
    per_rep = np.sum(vals ** 2, axis=-1) * grid.step
    mean = float(np.mean(per_rep))
    se_mean = float(np.std(per_rep, ddof=1) / math.sqrt(per_rep.shape[0]))
    if mean <= 0.0:
        return 0.0, se_mean
    return math.sqrt(mean), se_mean / (2.0 * math.sqrt(mean))


@dataclass(frozen=True)
class YNormResult:
    value: float
    x_part: float
    ratio_sup: float
    diverges: bool
    ratio_slope: float | None


def y_norm(gamma: Integrand, nu: float, eps: float, grid: SimulationGrid,
           resolution: int = 48, ensemble=None) -> YNormResult:
    """Forecast-variance norm: ||gamma||_X + sup (E Var_tau gamma(t))^1/2 / (t-tau)^((1+nu)/2).

    Suprema are taken over the evaluation grid only (resolution tau points,
    log-spaced offsets down to the fine step).  A negative fitted slope of
    the ratio in the offset flags that the ratio grows without bound as
    t decreases to tau: the integrand falls outside this nu class.
    """
    if nu < 0.0 or eps <= 0.0:
        raise ValueError("need nu >= 0 and eps > 0")
    t_end = grid.horizon
    if gamma.second_moment(0.5 * t_end) is not None:
        tt = fine_cell_times(grid)
        sq = np.array([gamma.second_moment(t) for t in tt])
        x_part = math.sqrt(max(float(np.sum(sq) * grid.step), 0.0))
    else:
        if ensemble is None:
            raise ValueError("no closed-form second moment: an ensemble is required for the X part")
        x_part, _ = x_norm(gamma, ensemble)

    taus = np.linspace(0.0, t_end, resolution, endpoint=False)
    n_off = max(resolution // 2, 8)
    offsets = np.exp(np.linspace(math.log(grid.step), math.log(eps), n_off))
    ratio_by_offset = np.zeros(n_off)
    for i, d in enumerate(offsets):
        best = 0.0
        for tau in taus:
            t = tau + d
            if t > t_end:
                continue
            ev = gamma.cond_var(tau, t)
            best = max(best, math.sqrt(max(ev, 0.0)) / d ** ((1.0 + nu) / 2.0))
        ratio_by_offset[i] = best

    sup = float(ratio_by_offset.max(initial=0.0))
    slope = None
    diverges = False
    pos = ratio_by_offset > 0.0
    if pos.sum() >= 3:
        k = min(int(pos.sum()), max(4, n_off // 3))
        sel = np.flatnonzero(pos)[:k]
        slope = float(np.polyfit(np.log(offsets[sel]), np.log(ratio_by_offset[sel]), 1)[0])
        diverges = slope < -0.02
    return YNormResult(value=x_part + sup, x_part=x_part, ratio_sup=sup,
                       diverges=diverges, ratio_slope=slope)
