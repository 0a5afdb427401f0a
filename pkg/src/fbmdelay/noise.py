"""Seeded Brownian driver and moving-average synthesis of the derived processes.

One NoisePath holds the increments of a single standard Brownian path on a
uniform lattice covering [-L, T]; it is the only source of randomness, and
every process here (B_H, W_H, R_H, DR_H) is a deterministic functional of
it.  Wiener integrals are discretized with cell-averaged kernel weights:
the exact integral of the power kernel over each noise cell, divided by the
step, applied to the increment.  On the uniform lattice those weights are a
function of the index lag only, so whole paths come out of one causal
convolution (FFT).

Measurability is structural: any quantity conditioned on time tau is
computed from increments in cells ending at or before tau, enforced by
masking, never by zeroing data.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

from .kernels import HALF, HurstParameter, truncation_tail_bound

__all__ = [
    "SimulationGrid",
    "NoisePath",
    "NoiseBatch",
    "ProcessPath",
    "make_grid",
    "generate_noise",
    "generate_noise_batch",
    "synthesize_fbm",
    "synthesize_w",
    "synthesize_dr",
    "dr_pointwise_closed_form",
    "dr_energy_closed_form",
    "write_path_csv",
]

PROCESS_KINDS = ("B", "B_H", "W_H", "R_H", "DR_H")

_LATTICE_RTOL = 1e-9


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform lattice over [warmup_start, horizon] with the origin at 0."""

    warmup_start: float
    origin: float
    horizon: float
    step: float
    cell_count: int

    def __post_init__(self):
        if not (self.warmup_start <= self.origin < self.horizon):
            raise ValueError("need warmup_start <= origin < horizon")
        if self.step <= 0.0:
            raise ValueError("step must be positive")
        span = self.horizon - self.warmup_start
        if abs(self.step * self.cell_count - span) > _LATTICE_RTOL * span:
            raise ValueError("step * cell_count must equal horizon - warmup_start")

    @property
    def origin_index(self) -> int:
        return int(round((self.origin - self.warmup_start) / self.step))

    @property
    def main_steps(self) -> int:
        """Number of cells on [origin, horizon]."""
        return self.cell_count - self.origin_index

    @property
    def warmup_length(self) -> float:
        return self.origin - self.warmup_start

    def edges(self) -> np.ndarray:
        return self.warmup_start + self.step * np.arange(self.cell_count + 1)

    def index_of(self, t: float) -> int:
        """Lattice index of a grid point; rejects off-lattice times."""
        pos = (t - self.warmup_start) / self.step
        idx = int(round(pos))
        if not (0 <= idx <= self.cell_count) or abs(pos - idx) > 1e-6:
            raise ValueError(f"t={t} is not on the simulation lattice")
        return idx


def make_grid(horizon: float, steps: int, warmup: float = 0.0) -> SimulationGrid:
    """Grid with `steps` cells on [0, horizon] and >= warmup of history before 0."""
    if horizon <= 0.0 or steps < 1:
        raise ValueError("need horizon > 0 and steps >= 1")
    if warmup < 0.0:
        raise ValueError("warmup must be >= 0")
    step = horizon / steps
    warmup_cells = int(math.ceil(warmup / step - 1e-12))
    return SimulationGrid(
        warmup_start=-warmup_cells * step,
        origin=0.0,
        horizon=horizon,
        step=step,
        cell_count=steps + warmup_cells,
    )


@dataclass(frozen=True)
class NoisePath:
    """One realization of the driving Brownian increments (immutable)."""

    grid: SimulationGrid
    increments: np.ndarray
    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.increments.shape != (self.grid.cell_count,):
            raise ValueError("increments must hold one value per grid cell")
        self.increments.setflags(write=False)


@dataclass(frozen=True)
class NoiseBatch:
    """A stack of independent NoisePaths sharing one grid (rows = replications)."""

    grid: SimulationGrid
    increments: np.ndarray  # shape (replications, cell_count)
    seed: int
    first_stream: int = 0

    def __post_init__(self):
        if self.increments.ndim != 2 or self.increments.shape[1] != self.grid.cell_count:
            raise ValueError("increments must be (replications, cell_count)")
        self.increments.setflags(write=False)

    @property
    def replications(self) -> int:
        return self.increments.shape[0]

    def path(self, r: int) -> NoisePath:
        return NoisePath(self.grid, self.increments[r].copy(), self.seed, self.first_stream + r)


def _rng(seed: int, stream: int) -> np.random.Generator:
    # Philox is counter-based: draw i of stream s is a pure function of (seed, s, i).
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def generate_noise(seed: int, grid: SimulationGrid, stream: int = 0) -> NoisePath:
    """Gaussian increments with variance = step; bit-for-bit reproducible."""
    dB = _rng(seed, stream).standard_normal(grid.cell_count) * math.sqrt(grid.step)
    return NoisePath(grid=grid, increments=dB, seed=seed, stream=stream)


def generate_noise_batch(seed: int, grid: SimulationGrid, reps: int, first_stream: int = 0) -> NoiseBatch:
    """Independent replications; row r is identical to generate_noise(seed, grid, first_stream + r)."""
    out = np.empty((reps, grid.cell_count))
    root = math.sqrt(grid.step)
    for r in range(reps):
        out[r] = _rng(seed, first_stream + r).standard_normal(grid.cell_count) * root
    return NoiseBatch(grid=grid, increments=out, seed=seed, first_stream=first_stream)


# ---------------------------------------------------------------------------
# kernel weight tables and causal convolution on the lattice
# ---------------------------------------------------------------------------

def avg_kernel_table(hp: HurstParameter, n: int, step: float) -> np.ndarray:
    """A[m] = cell average of u^(h-1/2) over [(m-1)*step, m*step]; A[0] = 0.

    These are the fbm synthesis weights: at lag m the increment of cell
    [t_{j-m}, t_{j-m+1}] enters B_H(t_j) with weight c_h * A[m].
    """
    m = np.arange(n + 1, dtype=float)
    p1 = hp.h + HALF
    out = np.empty(n + 1)
    out[0] = 0.0
    out[1:] = ((m[1:] * step) ** p1 - ((m[1:] - 1.0) * step) ** p1) / (p1 * step)
    return out


def dr_kernel_table(hp: HurstParameter, n: int, step: float) -> np.ndarray:
    """D[m] = cell average of f'_t = (h-1/2) u^(h-3/2) at lag m; D[0] = 0."""
    if hp.is_brownian:
        return np.zeros(n + 1)
    m = np.arange(n + 1, dtype=float)
    p = hp.h - HALF
    out = np.empty(n + 1)
    out[0] = 0.0
    out[1:] = ((m[1:] * step) ** p - ((m[1:] - 1.0) * step) ** p) / step
    return out


def causal_conv(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """y[..., j] = sum_{i < j} kernel[j - i] * x[..., i] for j = 0..len(kernel)-1.

    kernel[0] must be 0; x has the cells along the last axis.
    """
    m = x.shape[-1]
    out_len = kernel.shape[-1]
    n = _fft.next_fast_len(m + out_len - 1)
    fx = _fft.rfft(x, n, axis=-1)
    fk = _fft.rfft(kernel, n)
    y = _fft.irfft(fx * fk, n, axis=-1)
    return y[..., :out_len]


def _prefix_values(incs: np.ndarray, grid: SimulationGrid, hp: HurstParameter,
                   mask_before: int | None = None, mask_from: int | None = None) -> np.ndarray:
    """X[..., j] = c_h * sum over selected cells i < j of A[j-i] dB_i, j = 0..cell_count.

    mask_before keeps cells i < mask_before; mask_from keeps i >= mask_from.
    At h = 1/2 the kernel is identically 1 and X is a running sum.
    """
    sel = incs
    if mask_before is not None or mask_from is not None:
        lo = 0 if mask_from is None else mask_from
        hi = incs.shape[-1] if mask_before is None else mask_before
        sel = np.zeros_like(incs)
        sel[..., lo:hi] = incs[..., lo:hi]
    if hp.is_brownian:
        out = np.zeros(sel.shape[:-1] + (grid.cell_count + 1,))
        np.cumsum(sel, axis=-1, out=out[..., 1:])
        return out
    table = avg_kernel_table(hp, grid.cell_count, grid.step)
    return hp.c_h * causal_conv(sel, table)


def fbm_values(incs: np.ndarray, grid: SimulationGrid, hp: HurstParameter) -> np.ndarray:
    """B_H at the lattice points of [0, horizon]; B_H(0) = 0.  Batched over leading axes."""
    if not hp.is_brownian and grid.origin_index == 0:
        raise ValueError("empty warmup window with h > 1/2: truncation error uncontrolled")
    x = _prefix_values(incs, grid, hp)
    m0 = grid.origin_index
    return x[..., m0:] - x[..., m0:m0 + 1]


def w_values(incs: np.ndarray, grid: SimulationGrid, hp: HurstParameter, seg_idx: int) -> np.ndarray:
    """W_H(t_j) = c_h int_seg^t (t-r)^(h-1/2) dB for lattice j = seg_idx..cell_count."""
    x = _prefix_values(incs, grid, hp, mask_from=seg_idx)
    return x[..., seg_idx:]


def r_values(incs: np.ndarray, grid: SimulationGrid, hp: HurstParameter, seg_idx: int) -> np.ndarray:
    """R_H(t_j) (history component relative to the segment start), j = seg_idx..cell_count.

    Obtained by exact integration of DR_H from the segment start: the
    primitive of the cell-averaged f-kernel synthesis, so R(seg) = 0.
    """
    if hp.is_brownian:
        return np.zeros(incs.shape[:-1] + (grid.cell_count + 1 - seg_idx,))
    y = _prefix_values(incs, grid, hp, mask_before=seg_idx)
    return y[..., seg_idx:] - y[..., seg_idx:seg_idx + 1]


def dr_values(incs: np.ndarray, grid: SimulationGrid, hp: HurstParameter, seg_idx: int) -> np.ndarray:
    """DR_H(t_j) at lattice points j = seg_idx+1..cell_count (strictly after the start)."""
    if hp.is_brownian:
        return np.zeros(incs.shape[:-1] + (grid.cell_count - seg_idx,))
    sel = np.zeros_like(incs)
    sel[..., :seg_idx] = incs[..., :seg_idx]
    table = dr_kernel_table(hp, grid.cell_count, grid.step)
    y = hp.c_h * causal_conv(sel, table)
    return y[..., seg_idx + 1:]


# ---------------------------------------------------------------------------
# scalar synthesis (off-lattice times allowed; weights from exact cell clips)
# ---------------------------------------------------------------------------

def _clipped_avg_weights(edges: np.ndarray, t: float, lo: float, p1: float, step: float) -> np.ndarray:
    """Cell averages of u^(p1-1), u = t - q, with q clipped to [lo, t] per cell."""
    a = np.clip(edges[:-1], lo, t)
    b = np.clip(edges[1:], lo, t)
    ua = t - a
    ub = t - b
    return (ua ** p1 - ub ** p1) / (p1 * step)


def synthesize_w(noise: NoisePath, hp: HurstParameter, seg_start: float, t: float) -> float:
    """W_H(t) over [seg_start, t]; uses only increments in (seg_start, t]."""
    if t < seg_start:
        raise ValueError("need t >= seg_start")
    if t == seg_start:
        return 0.0
    g = noise.grid
    w = _clipped_avg_weights(g.edges(), t, seg_start, hp.h + HALF, g.step)
    return float(hp.c_h * np.dot(w, noise.increments))


def synthesize_dr(noise: NoisePath, hp: HurstParameter, seg_start: float, t: float) -> float:
    """DR_H(t) = c_h int_(-L)^seg_start (h-1/2)(t-q)^(h-3/2) dB(q); needs t > seg_start."""
    if t <= seg_start:
        raise ValueError("DR_H is defined for t strictly after the segment start")
    if hp.is_brownian:
        return 0.0
    g = noise.grid
    edges = g.edges()
    a = np.minimum(edges[:-1], seg_start)
    b = np.minimum(edges[1:], seg_start)
    p = hp.h - HALF
    w = ((t - a) ** p - (t - b) ** p) / g.step
    return float(hp.c_h * np.dot(w, noise.increments))


# ---------------------------------------------------------------------------
# public path objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProcessPath:
    kind: str
    hp: HurstParameter
    segment_start: float
    times: np.ndarray
    values: np.ndarray
    seed: int

    def __post_init__(self):
        if self.kind not in PROCESS_KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}")
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must align")
        self.times.setflags(write=False)
        self.values.setflags(write=False)


def synthesize_fbm(noise: NoisePath, hp: HurstParameter) -> ProcessPath:
    """Fractional Brownian motion on [0, horizon] from the shared driver."""
    vals = fbm_values(noise.increments, noise.grid, hp)
    g = noise.grid
    times = g.step * np.arange(g.main_steps + 1)
    return ProcessPath("B_H", hp, 0.0, times, vals, noise.seed)


def driving_path(noise: NoisePath) -> ProcessPath:
    """The driving Brownian motion restricted to [0, horizon], B(0) = 0."""
    g = noise.grid
    m0 = g.origin_index
    vals = np.concatenate([[0.0], np.cumsum(noise.increments[m0:])])
    times = g.step * np.arange(g.main_steps + 1)
    hp = HurstParameter(h=HALF, c_h=1.0, d_h=0.0)
    return ProcessPath("B", hp, 0.0, times, vals, noise.seed)


def process_path(noise: NoisePath, hp: HurstParameter, kind: str, seg_start: float = 0.0) -> ProcessPath:
    """Synthesize any of the supported process kinds on the lattice of [seg_start, horizon]."""
    g = noise.grid
    if kind == "B":
        return driving_path(noise)
    if kind == "B_H":
        return synthesize_fbm(noise, hp)
    idx = g.index_of(seg_start)
    if kind == "W_H":
        vals = w_values(noise.increments, g, hp, idx)
        times = seg_start + g.step * np.arange(vals.shape[-1])
    elif kind == "R_H":
        vals = r_values(noise.increments, g, hp, idx)
        times = seg_start + g.step * np.arange(vals.shape[-1])
    elif kind == "DR_H":
        vals = dr_values(noise.increments, g, hp, idx)
        times = seg_start + g.step * (1 + np.arange(vals.shape[-1]))
    else:
        raise ValueError(f"unknown process kind {kind!r}")
    return ProcessPath(kind, hp, seg_start, times, vals, noise.seed)


def dr_pointwise_closed_form(hp: HurstParameter, span: float) -> float:
    """E DR_H(s + span)^2 = c_h^2 (h-1/2)^2 / (2-2h) * span^(2h-2)."""
    if hp.is_brownian:
        return 0.0
    h = hp.h
    return hp.c_h ** 2 * (h - HALF) ** 2 / (2 - 2 * h) * span ** (2 * h - 2)


def dr_energy_closed_form(hp: HurstParameter, span: float) -> float:
    """E int_s^(s+span) DR_H^2 = c_h^2 (h-1/2) / (2(2-2h)) * span^(2h-1)."""
    if span <= 0.0:
        raise ValueError("span must be positive")
    if hp.is_brownian:
        return 0.0
    h = hp.h
    return hp.c_h ** 2 * (h - HALF) / (2 * (2 - 2 * h)) * span ** (2 * h - 1)


# ---------------------------------------------------------------------------
# exact second moments of the discrete synthesis (declared budgets)
# ---------------------------------------------------------------------------

def fbm_weight_vector(grid: SimulationGrid, hp: HurstParameter, t_idx: int) -> np.ndarray:
    """Per-cell synthesis weights w with B_H(t_idx) = sum_i w_i dB_i."""
    table = avg_kernel_table(hp, grid.cell_count, grid.step)
    m0 = grid.origin_index
    i = np.arange(grid.cell_count)
    lag_t = np.clip(t_idx - i, 0, None)
    lag_0 = np.clip(m0 - i, 0, None)
    return hp.c_h * (table[lag_t] - table[lag_0])


def discrete_fbm_cov(grid: SimulationGrid, hp: HurstParameter, t1: float, t2: float) -> float:
    """Exact E[B_H(t1) B_H(t2)] of the synthesized (truncated, discretized) process."""
    w1 = fbm_weight_vector(grid, hp, grid.index_of(t1))
    w2 = fbm_weight_vector(grid, hp, grid.index_of(t2))
    return float(grid.step * np.dot(w1, w2))


def discrete_dr_second_moment(grid: SimulationGrid, hp: HurstParameter, seg_idx: int, t: float) -> float:
    """Exact E DR_H(t)^2 of the discrete synthesis with history cut at the grid start."""
    if hp.is_brownian:
        return 0.0
    edges = grid.edges()
    a = np.minimum(edges[:-1], edges[seg_idx])
    b = np.minimum(edges[1:], edges[seg_idx])
    p = hp.h - HALF
    w = hp.c_h * ((t - a) ** p - (t - b) ** p) / grid.step
    return float(grid.step * np.dot(w, w))


def discrete_dr_energy(grid: SimulationGrid, hp: HurstParameter, seg_idx: int,
                       eval_idx: np.ndarray, quad_weights: np.ndarray) -> float:
    """Exact expectation of sum_l quad_weights[l] * DR_H(t_{eval_idx[l]})^2."""
    if hp.is_brownian:
        return 0.0
    table = dr_kernel_table(hp, grid.cell_count, grid.step)
    mask = np.zeros(grid.cell_count)
    mask[:seg_idx] = 1.0
    sq = hp.c_h ** 2 * causal_conv(mask, table ** 2) * grid.step
    return float(np.dot(quad_weights, sq[eval_idx]))


def declared_truncation_budget(grid: SimulationGrid, hp: HurstParameter) -> float:
    """Variance bound for the history lost beyond the grid's warmup window."""
    return truncation_tail_bound(hp, grid.horizon, grid.warmup_length) if not hp.is_brownian else 0.0


def write_path_csv(path: ProcessPath, dest) -> None:
    """CSV with (time, value) rows; the header row names kind, h and seed."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="") if own else dest
    try:
        fh.write(f"# kind={path.kind} h={path.hp.h!r} seed={path.seed}\n")
        fh.write("time,value\n")
        for t, v in zip(path.times, path.values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")
    finally:
        if own:
            fh.close()


def path_csv_string(path: ProcessPath) -> str:
    buf = io.StringIO()
    write_path_csv(path, buf)
    return buf.getvalue()
