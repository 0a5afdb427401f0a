"""Monte Carlo experiment drivers and their CSV/JSON interfaces.

Every driver follows the same discipline:

* common random numbers: within a replication, every Hurst value consumes the
  identical driving noise (one Philox stream per replication, checksummed);
* per-replication results are materialized in stream order and aggregated
  once, so output is independent of chunking and scheduling;
* every tolerance is 3 standard errors plus a declared budget computed from
  exact expectations of the discrete estimators, never a fitted fudge.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass

import numpy as np

from .kernels import HALF, HurstParameter, hurst_constant
from .integrands import (
    BrownianIntegrand,
    DeterministicIntegrand,
    FbmIntegrand,
    Integrand,
    PiecewisePredictableIntegrand,
    QuadraticBrownianIntegrand,
    RlFbmIntegrand,
    SegmentGrid,
    dyadic_projection,
)
from .integrator import (
    _segment_lattice_indices,
    delayed_parts_for_cells,
    noise_transforms,
)
from .noise import (
    SimulationGrid,
    discrete_dr_energy,
    discrete_dr_second_moment,
    discrete_fbm_cov,
    dr_energy_closed_form,
    dr_pointwise_closed_form,
    dr_values,
    fbm_values,
    generate_noise_batch,
    make_grid,
)

__all__ = [
    "DeskConfig",
    "MCResult",
    "DrMomentReport",
    "ContinuityCurve",
    "ContinuityNotApplicableError",
    "verify_dr_moments",
    "shiryaev_identity_check",
    "nonconvergence_demo",
    "continuity_study",
    "cauchy_decay_study",
    "parse_integrand",
    "write_moments_csv",
    "write_continuity_csv",
    "write_decay_csv",
    "write_nonconv_csv",
    "write_shiryaev_csv",
    "write_manifest",
]


@dataclass(frozen=True)
class DeskConfig:
    """Desk-scale defaults: fine grid 2^12 on [0, 1], warmup length 8."""

    horizon: float = 1.0
    steps: int = 4096
    warmup: float = 8.0
    chunk: int = 256

    def grid(self) -> SimulationGrid:
        return make_grid(self.horizon, self.steps, self.warmup)


DESK = DeskConfig()


@dataclass(frozen=True)
class MCResult:
    estimate: float
    std_error: float
    replications: int
    seed: int
    truncation_budget: float


def _mc(values: np.ndarray, seed: int, budget: float) -> MCResult:
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MCResult(estimate=float(values.mean()), std_error=se,
                    replications=n, seed=seed, truncation_budget=budget)


def _chunks(reps: int, chunk: int):
    start = 0
    while start < reps:
        yield start, min(start + chunk, reps)
        start += chunk


def _checksum(incs: np.ndarray) -> int:
    return zlib.crc32(np.ascontiguousarray(incs).tobytes())


# ---------------------------------------------------------------------------
# moment identities for the history-derivative process
# ---------------------------------------------------------------------------

def _energy_quadrature(grid: SimulationGrid, hp: HurstParameter):
    """Lattice evaluation points and profile-matched weights for int_0^T DR^2.

    The weights integrate the known second-moment profile t^(2h-2) exactly,
    so the singular first cell carries its true mass.
    """
    n = grid.main_steps
    h = grid.step
    eval_idx = grid.origin_index + np.arange(1, n + 1)
    if hp.is_brownian:
        return eval_idx, np.full(n, h)
    t = h * np.arange(n + 1)
    e = 2 * hp.h - 2.0
    w = (t[1:] ** (e + 1) - t[:-1] ** (e + 1)) / ((e + 1) * t[1:] ** e)
    return eval_idx, w


@dataclass(frozen=True)
class DrMomentReport:
    h: float
    span: float
    pointwise: MCResult
    energy: MCResult
    pointwise_closed: float
    energy_closed: float

    def rows(self):
        for name, res, closed in (("pointwise", self.pointwise, self.pointwise_closed),
                                  ("energy", self.energy, self.energy_closed)):
            yield {"h": self.h, "span": self.span, "quantity": name,
                   "estimate": res.estimate, "closed_form": closed,
                   "se": res.std_error, "budget": res.truncation_budget}


def verify_dr_moments(hp: HurstParameter, span: float, reps: int, seed: int,
                      config: DeskConfig = DESK) -> DrMomentReport:
    """MC check of E DR_H(span)^2 and E int_0^span DR_H^2 against the closed forms."""
    if reps < 100:
        raise ValueError("need at least 100 replications")
    grid = make_grid(span, config.steps, config.warmup)
    m0 = grid.origin_index
    eval_idx, quad_w = _energy_quadrature(grid, hp)

    point = np.empty(reps)
    energy = np.empty(reps)
    for lo, hi in _chunks(reps, config.chunk):
        nb = generate_noise_batch(seed, grid, hi - lo, first_stream=lo)
        drv = dr_values(nb.increments, grid, hp, m0)  # lattice j = m0+1 .. cell_count
        point[lo:hi] = drv[:, grid.cell_count - m0 - 1] ** 2
        energy[lo:hi] = drv[:, eval_idx - m0 - 1] ** 2 @ quad_w

    p_closed = dr_pointwise_closed_form(hp, span)
    e_closed = dr_energy_closed_form(hp, span) if not hp.is_brownian else 0.0
    p_budget = abs(p_closed - discrete_dr_second_moment(grid, hp, m0, span))
    e_budget = abs(e_closed - discrete_dr_energy(grid, hp, m0, eval_idx, quad_w))
    return DrMomentReport(
        h=hp.h, span=span,
        pointwise=_mc(point, seed, p_budget),
        energy=_mc(energy, seed, e_budget),
        pointwise_closed=p_closed, energy_closed=e_closed,
    )


def fbm_law_check(hp: HurstParameter, reps: int, seed: int, config: DeskConfig = DESK):
    """MC Var B_H(1) and Cov(B_H(1), B_H(1/2)) with exact discrete-expectation budgets."""
    grid = config.grid()
    n = grid.main_steps
    var_s = np.empty(reps)
    cov_s = np.empty(reps)
    for lo, hi in _chunks(reps, config.chunk):
        nb = generate_noise_batch(seed, grid, hi - lo, first_stream=lo)
        bh = fbm_values(nb.increments, grid, hp)
        var_s[lo:hi] = bh[:, n] ** 2
        cov_s[lo:hi] = bh[:, n] * bh[:, n // 2]
    t, s = grid.horizon, grid.horizon / 2
    var_closed = t ** (2 * hp.h)
    cov_closed = 0.5 * (t ** (2 * hp.h) + s ** (2 * hp.h) - (t - s) ** (2 * hp.h))
    var_budget = abs(var_closed - discrete_fbm_cov(grid, hp, t, t))
    cov_budget = abs(cov_closed - discrete_fbm_cov(grid, hp, t, s))
    return (_mc(var_s, seed, var_budget), var_closed), (_mc(cov_s, seed, cov_budget), cov_closed)


# ---------------------------------------------------------------------------
# Riemann-sum refinement and the quadratic identity
# ---------------------------------------------------------------------------

def shiryaev_identity_check(hp: HurstParameter, n_steps_seq, reps: int, seed: int,
                            config: DeskConfig = DESK):
    """Defect E|2 sum B_H(T_k) dB_H - B_H(T)^2| along a refinement sequence.

    The pathwise quadratic identity holds in the n -> infinity limit for
    h > 1/2; the defect of the left-point Riemann sum is the surviving
    discrete quadratic variation.
    """
    if hp.h <= HALF:
        raise ValueError("the quadratic identity check needs h > 1/2")
    grid = config.grid()
    n_fine = grid.main_steps
    seq = [int(n) for n in n_steps_seq]
    for n in seq:
        if n < 1 or n_fine % n != 0:
            raise ValueError(f"refinement level {n} does not divide the fine grid {n_fine}")
    defects = {n: np.empty(reps) for n in seq}
    for lo, hi in _chunks(reps, config.chunk):
        nb = generate_noise_batch(seed, grid, hi - lo, first_stream=lo)
        bh = fbm_values(nb.increments, grid, hp)
        final_sq = bh[:, -1] ** 2
        for n in seq:
            coarse = bh[:, ::n_fine // n]
            riem = np.sum(coarse[:, :-1] * np.diff(coarse, axis=-1), axis=-1)
            defects[n][lo:hi] = np.abs(2.0 * riem - final_sq)
    budget = 0.0  # identity is pathwise in the synthesized process; no closed-form target
    return [(n, _mc(defects[n], seed, budget)) for n in seq]


@dataclass(frozen=True)
class NonConvergenceRow:
    h: float
    gap_riemann: MCResult
    gap_limit: MCResult
    refinement_tol: float
    noise_checksum: int


def nonconvergence_demo(hursts, reps: int, seed: int, horizon: float = 1.0,
                        config: DeskConfig = DESK) -> list[NonConvergenceRow]:
    """Gap E int B_H dB_H - E int B dB per Hurst value; it does not vanish as h drops to 1/2.

    Reported twice per h: from the left-point Riemann sum at the fine
    resolution (its exact finite-n deficit 0.5 T^(2h) n^(1-2h) is declared as
    the refinement tolerance) and from the quadratic-identity limit object
    0.5 B_H(T)^2, which is the n -> infinity value of the sums.
    """
    cfg = DeskConfig(horizon=horizon, steps=config.steps, warmup=config.warmup, chunk=config.chunk)
    grid = cfg.grid()
    n = grid.main_steps
    hps = [hurst_constant(h) for h in hursts]
    d_riem = {hp.h: np.empty(reps) for hp in hps}
    d_lim = {hp.h: np.empty(reps) for hp in hps}
    checksums: dict[float, set] = {hp.h: set() for hp in hps}
    for lo, hi in _chunks(reps, cfg.chunk):
        nb = generate_noise_batch(seed, grid, hi - lo, first_stream=lo)
        crc = _checksum(nb.increments)
        b = np.zeros((hi - lo, n + 1))
        np.cumsum(nb.increments[:, grid.origin_index:], axis=-1, out=b[:, 1:])
        ito_b = np.sum(b[:, :-1] * np.diff(b, axis=-1), axis=-1)
        for hp in hps:
            bh = b if hp.is_brownian else fbm_values(nb.increments, grid, hp)
            riem = np.sum(bh[:, :-1] * np.diff(bh, axis=-1), axis=-1)
            d_riem[hp.h][lo:hi] = riem - ito_b
            d_lim[hp.h][lo:hi] = 0.5 * bh[:, -1] ** 2 - ito_b
            checksums[hp.h].add(crc)
    base = next(iter(checksums.values()))
    if any(cs != base for cs in checksums.values()):
        raise AssertionError("common-random-number discipline violated across Hurst values")
    rows = []
    for hp in hps:
        if hp.is_brownian:
            refinement, budget = 0.0, 0.0
        else:
            refinement = 0.5 * horizon ** (2 * hp.h) * float(n) ** (1.0 - 2.0 * hp.h)
            # the estimates ride on the truncated synthesis of B_H(T)^2
            budget = 0.5 * abs(horizon ** (2 * hp.h) - discrete_fbm_cov(grid, hp, horizon, horizon))
        rows.append(NonConvergenceRow(
            h=hp.h,
            gap_riemann=_mc(d_riem[hp.h], seed, budget),
            gap_limit=_mc(d_lim[hp.h], seed, budget),
            refinement_tol=refinement,
            noise_checksum=min(base),
        ))
    return rows


# ---------------------------------------------------------------------------
# Hurst-continuity of the delayed integral
# ---------------------------------------------------------------------------

class ContinuityNotApplicableError(ValueError):
    """The integrand sits in the class where Riemann-sum integrals fail to converge."""


@dataclass(frozen=True)
class ContinuityCurve:
    hurst_values: tuple[float, ...]
    gaps: tuple[float, ...]
    std_errors: tuple[float, ...]
    integrand_spec: str
    base_seed: int
    x_norm_ref: float
    noise_checksum: int
    tol: float

    def decreasing_within_1se(self) -> bool:
        g, s = self.gaps, self.std_errors
        return all(g[i + 1] <= g[i] + math.hypot(s[i], s[i + 1]) for i in range(len(g) - 1))

    @property
    def final_gap(self) -> float:
        return self.gaps[-1]

    @property
    def final_below_tol(self) -> bool:
        return self.final_gap < self.tol


def _integration_plan(gamma: Integrand, grid: SimulationGrid, proj_level: int):
    """Segment grid plus per-h integrand for the delayed-integral evaluation."""
    if isinstance(gamma, DeterministicIntegrand):
        return gamma, SegmentGrid.dyadic(grid.horizon, 0)
    if isinstance(gamma, PiecewisePredictableIntegrand):
        return gamma, gamma.grid
    if gamma.nu_exponent is not None and gamma.nu_exponent > 0.0:
        projected = dyadic_projection(gamma, proj_level, grid)
        return projected, SegmentGrid.dyadic(grid.horizon, proj_level)
    raise ContinuityNotApplicableError(
        f"integrand {gamma.spec_string()!r} has forecast-variance exponent nu = 0 and is not "
        "piecewise predictable; the Hurst-continuity theorem is not applicable to this "
        "convergence (it is the non-convergent Riemann-sum regime)")


def _reference_x_norm(gamma: Integrand, grid: SimulationGrid, seed: int, reps: int = 256) -> float:
    sm = gamma.second_moment(grid.horizon / 2)
    if sm is not None:
        tt = grid.step * np.arange(grid.main_steps)
        return math.sqrt(max(float(sum(gamma.second_moment(t) for t in tt) * grid.step), 0.0))
    from .integrands import x_norm
    nb = generate_noise_batch(seed + 101, grid, reps)
    return x_norm(gamma, nb)[0]


def continuity_study(gamma: Integrand | str, hursts, reps: int, seed: int,
                     tol: float | None = None, config: DeskConfig = DESK,
                     proj_level: int = 8) -> ContinuityCurve:
    """Pathwise L1 gaps E|I_H(gamma) - I_(1/2)(gamma)| under common noise, per Hurst value.

    tol is the acceptance level for the final gap (default: 5% of the
    integrand's X norm); the curve records it alongside the estimates.
    """
    grid = config.grid()
    if isinstance(gamma, str):
        gamma = parse_integrand(gamma, horizon=grid.horizon)
    integrand, seg = _integration_plan(gamma, grid, proj_level)
    hps = [hurst_constant(h) for h in hursts]
    for hp in hps:
        if hp.is_brownian:
            raise ValueError("the baseline h = 1/2 is implicit; pass only h > 1/2 values")
    half = hurst_constant(HALF)
    if not integrand.segment_predictable_on(seg.breakpoints):
        raise ValueError("integration plan produced a non-predictable integrand")
    end = _segment_lattice_indices(grid, seg)[-1]
    gaps = {hp.h: np.empty(reps) for hp in hps}
    crcs: set[int] = set()
    for lo, hi in _chunks(reps, config.chunk):
        nb = generate_noise_batch(seed, grid, hi - lo, first_stream=lo)
        crcs.add(_checksum(nb.increments))
        cells = integrand.values_on_cells(grid, nb.increments)
        base, _, _, _ = delayed_parts_for_cells(cells, seg, nb, half)
        for hp in hps:
            pre = noise_transforms(grid, nb.increments, hp, int(end))
            value, _, _, _ = delayed_parts_for_cells(cells, seg, nb, hp, pre)
            gaps[hp.h][lo:hi] = np.abs(value - base)
    results = [_mc(gaps[hp.h], seed, 0.0) for hp in hps]
    x_ref = _reference_x_norm(gamma, grid, seed)
    return ContinuityCurve(
        hurst_values=tuple(hp.h for hp in hps),
        gaps=tuple(r.estimate for r in results),
        std_errors=tuple(r.std_error for r in results),
        integrand_spec=gamma.spec_string(),
        base_seed=seed,
        x_norm_ref=x_ref,
        noise_checksum=min(crcs),
        tol=tol if tol is not None else 0.05 * x_ref,
    )


# ---------------------------------------------------------------------------
# Cauchy decay of the dyadic extension
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayStudy:
    levels: tuple[int, ...]          # coarse level m of each gap (m -> m+1)
    gaps: tuple[float, ...]          # L1 gap of the full integral
    std_errors: tuple[float, ...]
    cross_gaps: tuple[float, ...]    # L1 gap of the inter-segment component
    cross_std_errors: tuple[float, ...]
    fitted_slope: float | None       # log2 slope of gaps vs m
    cross_fitted_slope: float | None
    target_slope: float | None       # -(nu/2 + h - 1/2)
    integrand_spec: str
    h: float
    seed: int


def _fit_slope(levels, gaps) -> float | None:
    g = np.asarray(gaps)
    if np.any(g <= 0.0) or g.size < 2:
        return None
    return float(np.polyfit(np.asarray(levels, dtype=float), np.log2(g), 1)[0])


def cauchy_decay_study(gamma: Integrand | str, hp: HurstParameter, levels, reps: int,
                       seed: int, config: DeskConfig = DESK) -> DecayStudy:
    """Level-to-level L1 gaps of the dyadic extension, with log2 slope fits.

    For each consecutive pair (m, m+1) both projections are integrated on the
    level-(m+1) grid (the total is grid-invariant; the split into parts is
    not), so the inter-segment component matches the quantity whose geometric
    decay drives the extension.
    """
    grid = config.grid()
    if isinstance(gamma, str):
        gamma = parse_integrand(gamma, horizon=grid.horizon)
    levels = sorted(int(n) for n in levels)
    if len(levels) < 2 or any(b - a != 1 for a, b in zip(levels[:-1], levels[1:])):
        raise ValueError("levels must be consecutive integers")
    if isinstance(gamma, DeterministicIntegrand):
        # projection is vacuous; gaps sit at the quadrature-noise floor
        return DecayStudy(levels=tuple(levels[:-1]), gaps=(0.0,) * (len(levels) - 1),
                          std_errors=(0.0,) * (len(levels) - 1),
                          cross_gaps=(0.0,) * (len(levels) - 1),
                          cross_std_errors=(0.0,) * (len(levels) - 1),
                          fitted_slope=None, cross_fitted_slope=None, target_slope=None,
                          integrand_spec=gamma.spec_string(), h=hp.h, seed=seed)
    if gamma.nu_exponent is None:
        raise ValueError("the decay study needs an integrand with a known variance exponent")

    pair_levels = levels[:-1]
    gap_tot = {m: np.empty(reps) for m in pair_levels}
    gap_cross = {m: np.empty(reps) for m in pair_levels}
    end = grid.origin_index + grid.main_steps
    for lo, hi in _chunks(reps, config.chunk):
        nb = generate_noise_batch(seed, grid, hi - lo, first_stream=lo)
        pre = noise_transforms(grid, nb.increments, hp, end)
        cells = {n: dyadic_projection(gamma, n, grid).values_on_cells(grid, nb.increments)
                 for n in levels}
        for m in pair_levels:
            seg = SegmentGrid.dyadic(grid.horizon, m + 1)
            v0, _, _, c0 = delayed_parts_for_cells(cells[m], seg, nb, hp, pre)
            v1, _, _, c1 = delayed_parts_for_cells(cells[m + 1], seg, nb, hp, pre)
            gap_tot[m][lo:hi] = np.abs(v1 - v0)
            gap_cross[m][lo:hi] = np.abs(c1 - c0)

    tot = [_mc(gap_tot[m], seed, 0.0) for m in pair_levels]
    cross = [_mc(gap_cross[m], seed, 0.0) for m in pair_levels]
    target = None
    if math.isfinite(gamma.nu_exponent) and not hp.is_brownian:
        target = -(gamma.nu_exponent / 2.0 + hp.h - 0.5)
    return DecayStudy(
        levels=tuple(pair_levels),
        gaps=tuple(r.estimate for r in tot),
        std_errors=tuple(r.std_error for r in tot),
        cross_gaps=tuple(r.estimate for r in cross),
        cross_std_errors=tuple(r.std_error for r in cross),
        fitted_slope=_fit_slope(pair_levels, [r.estimate for r in tot]),
        cross_fitted_slope=_fit_slope(pair_levels, [r.estimate for r in cross]),
        target_slope=target,
        integrand_spec=gamma.spec_string(), h=hp.h, seed=seed,
    )


# ---------------------------------------------------------------------------
# integrand spec strings
# ---------------------------------------------------------------------------

_SPEC_HELP = ("accepted integrand specs: det:const:<v> | det:poly:a0,a1,... | bm | "
              "fbm:<H> | bm2 | pp:<inner>:<n-segments>")


def parse_integrand(spec: str, horizon: float = 1.0) -> Integrand:
    """Build an integrand from its CLI spec string."""
    parts = spec.split(":")
    try:
        if parts[0] == "det":
            if parts[1] == "const":
                return DeterministicIntegrand.constant(float(parts[2]))
            if parts[1] == "poly":
                return DeterministicIntegrand.polynomial([float(a) for a in parts[2].split(",")])
            raise ValueError
        if spec == "bm":
            return BrownianIntegrand()
        if parts[0] == "fbm":
            return FbmIntegrand(float(parts[1]))
        if parts[0] == "rl":
            return RlFbmIntegrand(float(parts[1]), float(parts[2]) if len(parts) > 2 else 0.0)
        if spec == "bm2":
            return QuadraticBrownianIntegrand()
        if parts[0] == "pp":
            inner = parse_integrand(":".join(parts[1:-1]), horizon)
            n_seg = int(parts[-1])
            return PiecewisePredictableIntegrand(inner, SegmentGrid.uniform(horizon, n_seg))
        raise ValueError
    except (IndexError, ValueError) as exc:
        detail = f" ({exc})" if str(exc) else ""
        raise ValueError(f"unknown integrand spec {spec!r}; {_SPEC_HELP}{detail}") from None


# ---------------------------------------------------------------------------
# CSV / manifest output (fixed field order and shortest-roundtrip floats)
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_moments_csv(path, reports: list[DrMomentReport]) -> None:
    rows = []
    for rep in reports:
        for r in rep.rows():
            rows.append([r["h"], r["span"], r["quantity"], r["estimate"],
                         r["closed_form"], r["se"], r["budget"]])
    _write_csv(path, ["h", "span", "quantity", "estimate", "closed_form", "se", "budget"], rows)


def write_continuity_csv(path, curve: ContinuityCurve) -> None:
    rows = [[h, g, s] for h, g, s in zip(curve.hurst_values, curve.gaps, curve.std_errors)]
    _write_csv(path, ["h", "gap", "se"], rows)


def write_decay_csv(path, study: DecayStudy) -> None:
    rows = [[m, g, s, study.fitted_slope, cg, cs, study.cross_fitted_slope]
            for m, g, s, cg, cs in zip(study.levels, study.gaps, study.std_errors,
                                       study.cross_gaps, study.cross_std_errors)]
    _write_csv(path, ["level", "gap", "se", "fitted_slope",
                      "cross_gap", "cross_se", "cross_fitted_slope"], rows)


def write_nonconv_csv(path, rows: list[NonConvergenceRow]) -> None:
    out = [[r.h, r.gap_riemann.estimate, r.gap_riemann.std_error,
            r.gap_limit.estimate, r.gap_limit.std_error, r.refinement_tol]
           for r in rows]
    _write_csv(path, ["h", "gap", "se", "gap_limit", "se_limit", "refinement_tol"], out)


def write_shiryaev_csv(path, rows) -> None:
    out = [[n, r.estimate, r.std_error] for n, r in rows]
    _write_csv(path, ["n_steps", "defect", "se"], out)


def write_manifest(path, record: dict) -> None:
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
