"""Tail exponents, localization along the injection ray and existence sweeps."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, classify
from .lattice import ClusterDistribution, Source, dyadic_window_mass, tail_count
from .solver import SolverConfig, evolve_to_steady
from .truncation import TruncatedKernel, TruncationParams

__all__ = [
    "DiagnosticError",
    "ExponentFit",
    "fit_tail_exponent",
    "window_constants",
    "default_z_grid",
    "localization_ratio",
    "isotropic_ratio",
    "SweepCell",
    "SweepResult",
    "trend_verdict",
    "existence_sweep",
    "SATURATION_THRESHOLD",
    "DIVERGENCE_THRESHOLD",
]

# relative change per refinement below which a statistic counts as settled
SATURATION_THRESHOLD = 0.05
# relative growth per refinement above which it counts as running away
DIVERGENCE_THRESHOLD = 0.25


class DiagnosticError(ValueError):
    """A statistic is undefined for the given state (too few points, empty band)."""


# --- tail exponent ---------------------------------------------------------

@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    points: int

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise DiagnosticError("fit window must satisfy z_min < z_max")
        if self.points < 4:
            raise DiagnosticError("an exponent fit needs at least 4 points")

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared,
                "window": list(self.window), "points": self.points}


def default_z_grid(M: float, L: int = 1, per_octave: int = 4) -> np.ndarray:
    """Log-spaced fit grid inside ``[max(2L, 8), M/2]``, kept a factor 4 off both ends
    when the range allows it."""
    lo, hi = max(2.0 * L, 8.0), M / 2.0
    if 4 * lo < hi / 4:
        lo, hi = 4 * lo, hi / 4
    if not lo < hi:
        raise DiagnosticError(f"no room for a fit window below M/2={hi}")
    count = max(4, int(round(per_octave * math.log2(hi / lo))) + 1)
    return np.geomspace(lo, hi, count)


def fit_tail_exponent(state: ClusterDistribution, b: float = 0.5, z_grid=None, L: int = 1,
                      M: float | None = None) -> ExponentFit:
    """Least-squares slope of ``log W(z)`` against ``log z`` with ``W`` the dyadic
    window mass.

    Windows with no mass are dropped.  When the cutoff ``M`` is known (from the
    argument or the state's cap ``2M``) the grid must stay inside
    ``[max(2L, 8), M/2]``.
    """
    if M is None and math.isfinite(state.cap):
        M = state.cap / 2
    if z_grid is None:
        if M is None:
            raise DiagnosticError("z_grid is required when the cutoff M is unknown")
        z_grid = default_z_grid(M, L)
    z = np.asarray(sorted(float(x) for x in z_grid))
    lo = max(2.0 * L, 8.0)
    if len(z) and z[0] < lo:
        raise DiagnosticError(f"z_grid starts at {z[0]} < max(2L, 8) = {lo}")
    if M is not None and len(z) and z[-1] > M / 2:
        raise DiagnosticError(f"z_grid ends at {z[-1]} > M/2 = {M / 2}")
    w = np.array([dyadic_window_mass(state, zz, b) for zz in z])
    keep = w > 0
    z, w = z[keep], w[keep]
    if len(z) < 4:
        raise DiagnosticError(f"only {len(z)} non-empty windows; need at least 4")
    x, y = np.log(z), np.log(w)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(float(slope), float(intercept), r2, (float(z[0]), float(z[-1])), len(z))


def window_constants(state: ClusterDistribution, z_grid, exponent: float, b: float = 0.5,
                     injection: float = 1.0) -> np.ndarray:
    """``W(z) * z**exponent / sqrt(|J0|)`` on ``z_grid``.

    For a tail ``W(z) ~ C sqrt(|J0|) z**(-exponent)`` these are the local
    prefactors; their spread brackets the lower and upper constants.
    """
    z = np.asarray(z_grid, dtype=float)
    w = np.array([dyadic_window_mass(state, zz, b) for zz in z])
    return w * z ** exponent / math.sqrt(injection)


# --- localization ----------------------------------------------------------

def _band_and_cone(keys: np.ndarray, R: float, zeta_band: float, eps_angle: float, theta):
    sizes = keys.sum(axis=1)
    band = (sizes >= R) & (sizes <= zeta_band * R)
    # l1 distance on the simplex
    dist = np.abs(keys / np.maximum(sizes, 1)[:, None] - theta[None, :]).sum(axis=1)
    return band, band & (dist < eps_angle)


def _check_theta(theta, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dim,) or np.any(theta < 0) or not math.isclose(theta.sum(), 1.0, rel_tol=1e-9):
        raise DiagnosticError(f"theta must be a point of the {dim}-simplex, got {theta.tolist()}")
    return theta


def localization_ratio(state: ClusterDistribution, R: float, zeta_band: float = 2.0,
                       eps_angle: float = 0.1, theta=None, src: Source | None = None) -> float:
    """Share of the band ``R <= |a| <= zeta_band R`` lying in the cone
    ``|a/|a| - theta|_1 < eps_angle``.

    ``theta`` defaults to the injection direction ``J0/|J0|`` of ``src``.
    An empty band raises :class:`DiagnosticError`.
    """
    if not zeta_band > 1:
        raise DiagnosticError("zeta_band must be > 1")
    if not eps_angle > 0:
        raise DiagnosticError("eps_angle must be > 0")
    if theta is None:
        if src is None:
            raise DiagnosticError("give theta or a source to take the injection direction from")
        theta = src.direction()
    theta = _check_theta(theta, state.dim)
    keys = state.keys_array()
    vals = state.values_array()
    band, cone = _band_and_cone(keys, R, zeta_band, eps_angle, theta)
    denom = float(vals[band].sum())
    if denom <= 0:
        raise DiagnosticError(f"no mass in the band {R} <= |a| <= {zeta_band * R}")
    return float(vals[cone].sum()) / denom


def isotropic_ratio(dim: int, R: float, zeta_band: float = 2.0, eps_angle: float = 0.1,
                    theta=None) -> float:
    """The ratio for unit mass on every lattice site of the band (no preferred direction)."""
    from .lattice import enumerate_compositions

    theta = _check_theta(np.full(dim, 1.0 / dim) if theta is None else theta, dim)
    keys = enumerate_compositions(dim, math.floor(zeta_band * R), nmin=math.ceil(R))
    band, cone = _band_and_cone(keys, R, zeta_band, eps_angle, theta)
    if not band.any():
        raise DiagnosticError("empty band")
    return float(cone.sum()) / float(band.sum())


# --- existence sweep -------------------------------------------------------

def _changes(seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    prev = np.where(seq[:-1] != 0, np.abs(seq[:-1]), 1.0)
    return (seq[1:] - seq[:-1]) / prev


def trend_verdict(series) -> str:
    """Verdict for one refinement sequence of statistics.

    ``series`` is a list of sequences (one per statistic), each ordered from
    coarse to fine.  ``saturating`` needs every statistic to move by less
    than 5% over the last refinement, with no growth spurt above 25% on the
    refinement just before it; ``diverging`` needs every statistic to grow by
    more than 25% on every refinement.  Anything else, including a sequence
    with a single entry, is ``inconclusive``.
    """
    series = [np.asarray(s, dtype=float) for s in series]
    if not series or min(len(s) for s in series) < 2:
        return "inconclusive"
    ch = [_changes(s) for s in series]
    if all(np.all(c > DIVERGENCE_THRESHOLD) for c in ch):
        return "diverging"
    last_small = all(abs(c[-1]) < SATURATION_THRESHOLD for c in ch)
    # hysteresis: leaving the divergent regime takes one inconclusive step
    prev_tame = all(len(c) < 2 or c[-2] <= DIVERGENCE_THRESHOLD for c in ch)
    if last_small and prev_tame:
        return "saturating"
    return "inconclusive"


@dataclass(frozen=True)
class SweepCell:
    epsilon: float
    M: float
    total_number: float
    tail_count: float
    moment: float
    converged: bool
    residual: float
    steps: int

    def to_row(self) -> list:
        return [self.epsilon, self.M, self.total_number, self.tail_count, self.moment,
                int(self.converged), self.residual, self.steps]


@dataclass
class SweepResult:
    """Per-cell summaries in grid order (``eps`` outer, ``M`` inner) and a verdict.

    ``moment`` is ``sum |a|^(gamma+p) n_a``, reported alongside the two
    verdict statistics but not used by the verdict.
    """

    eps_list: list
    M_list: list
    R: float
    cells: list
    verdict: str
    axis_verdicts: dict = field(default_factory=dict)

    CSV_HEADER = ("epsilon", "M", "total_number", "tail_count", "moment", "converged",
                  "residual", "steps")

    def cell(self, eps: float, M: float) -> SweepCell:
        for c in self.cells:
            if c.epsilon == eps and c.M == M:
                return c
        raise KeyError((eps, M))

    def series(self, name: str, eps: float) -> list:
        """A statistic along ``M`` at fixed ``eps``."""
        return [getattr(self.cell(eps, M), name) for M in self.M_list]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for c in self.cells:
            w.writerow([repr(x) if isinstance(x, float) else x for x in c.to_row()])
        return buf.getvalue()


def _run_cell(args) -> SweepCell:
    base, src, eps, M, cfg, R, q = args
    L = max(src.reach, 1)
    kernel = TruncatedKernel(base, TruncationParams(eps, M, L))
    res = evolve_to_steady(ClusterDistribution(src.dim), cfg, kernel, src)
    st = res.state
    sizes = st.sizes().astype(float)
    moment = float(st.values_array() @ sizes ** q) if len(st) else 0.0
    return SweepCell(float(eps), float(M), st.total_number(), tail_count(st, R), moment,
                     res.converged, res.residual, res.steps)


def _workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("COAG_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise DiagnosticError(f"COAG_THREADS must be an integer, got {env!r}") from None


def existence_sweep(base: KernelSpec, src: Source, eps_list, M_list, cfg: SolverConfig | None = None,
                    R: float | None = None, workers: int | None = None) -> SweepResult:
    """Solve the truncated problem on every ``(eps, M)`` cell and judge the trend.

    The truncation limit is taken ``M -> inf`` first and ``eps -> 0`` second,
    so the verdict looks at the ``M`` sequence for every ``eps`` and at the
    ``eps`` sequence at the largest ``M``, each through :func:`trend_verdict`
    on ``(total_number, tail_count(R))``.  The sweep is ``saturating`` when
    all of them saturate; ``diverging`` when every ``M`` sequence diverges.
    Any non-converged cell makes it ``inconclusive``.

    ``R`` defaults to ``max(2L, min(M)/8)`` so the tail count stays clear of
    both the source and the cutoff layer.  Cells run in a pool of
    ``workers`` processes (default from ``COAG_THREADS``, else serial);
    results are ordered by the grid regardless.
    """
    eps_list = [float(e) for e in eps_list]
    M_list = [float(m) for m in M_list]
    if not eps_list or not M_list:
        raise DiagnosticError("the sweep grid is empty")
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise DiagnosticError("eps_list must be strictly decreasing")
    if any(a >= b for a, b in zip(M_list, M_list[1:])):
        raise DiagnosticError("M_list must be strictly increasing")
    cfg = cfg or SolverConfig()
    L = max(src.reach, 1)
    if R is None:
        R = max(2.0 * L, M_list[0] / 8)
    env = classify(base)
    q = env.gamma + env.p if env.classified else 1.0

    jobs = [(base, src, e, M, cfg, R, q) for e in eps_list for M in M_list]
    n_workers = min(_workers(workers), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]

    result = SweepResult(eps_list, M_list, float(R), cells, "inconclusive")
    axis = {}
    if len(M_list) > 1:
        for e in eps_list:
            axis[f"M@eps={e!r}"] = trend_verdict([result.series("total_number", e),
                                                  result.series("tail_count", e)])
    if len(eps_list) > 1:
        top = [result.cell(e, M_list[-1]) for e in eps_list]
        axis[f"eps@M={M_list[-1]!r}"] = trend_verdict([[c.total_number for c in top],
                                                       [c.tail_count for c in top]])
    result.axis_verdicts = axis
    m_axes = [v for k, v in axis.items() if k.startswith("M@")]
    if not axis or not all(c.converged for c in cells):
        result.verdict = "inconclusive"
    elif all(v == "saturating" for v in axis.values()):
        result.verdict = "saturating"
    elif m_axes and all(v == "diverging" for v in m_axes):
        result.verdict = "diverging"
    return result
