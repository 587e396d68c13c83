"""Time integration of the truncated discrete coagulation equation.

For each composition ``alpha``

    dn/dt = zeta_M(alpha)/2 * sum_{beta<alpha} K(alpha-beta, beta) n_{alpha-beta} n_beta
            - n_alpha * sum_beta K(alpha, beta) n_beta + s_alpha

with ``K = K_{eps,M}``.  Steady states are reached by explicit adaptive
marching (Bogacki-Shampine 3(2) pair) with a positivity limiter on the step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import PRUNE_FLOOR, ClusterDistribution, Source, enumerate_compositions
from .truncation import TruncatedKernel, zeta as zeta_cutoff

__all__ = [
    "SolverError",
    "SolverConfig",
    "LatticeOperator",
    "SteadyResult",
    "rhs",
    "step",
    "evolve_to_steady",
]

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Integration failure (overflow, step-size underflow, bad setup)."""


@dataclass(frozen=True)
class SolverConfig:
    dt_init: float = 1e-2
    dt_max: float = 10.0
    safety: float = 0.9
    steady_tol: float = 1e-8
    max_time: float = 1e7
    max_steps: int = 1_000_000
    rtol: float = 1e-6
    atol: float = 1e-12
    stability: float = 1.5
    record_every: int = 1

    def __post_init__(self):
        for name in ("dt_init", "dt_max", "steady_tol", "max_time", "rtol", "atol", "stability"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if not self.steady_tol < 1:
            raise ValueError("steady_tol must be < 1")
        if self.max_steps < 1 or self.record_every < 1:
            raise ValueError("max_steps and record_every must be >= 1")


def _zeta_of(kernel, keys) -> np.ndarray:
    if isinstance(kernel, TruncatedKernel):
        return kernel.zeta(keys)
    return np.ones(len(keys))


def _check_rates(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise SolverError(f"rate overflow: non-finite right-hand side at entry {bad}")


def rhs(state: ClusterDistribution, kernel, src: Source | None = None) -> dict:
    """Right-hand side on the support of ``state`` and ``src``.

    Pairs are enumerated once over ``i <= j`` in sorted-key order; the
    diagonal carries the factor 1/2 of the symmetric double sum.
    """
    if isinstance(kernel, TruncatedKernel) and kernel.M < 1:
        raise SolverError("truncated kernel vanishes on the whole lattice (M < 1)")
    if src is not None and src.dim != state.dim:
        raise SolverError(f"state has d={state.dim}, source has d={src.dim}")
    keys = state.keys_array()
    vals = state.values_array()
    out: dict = {}
    if len(vals):
        kmat = np.asarray(kernel(keys[:, None, :], keys[None, :, :]), dtype=float)
        iu, ju = np.triu_indices(len(vals))
        with np.errstate(over="ignore", invalid="ignore"):
            loss = vals * (kmat @ vals)
            w = kmat[iu, ju] * vals[iu] * vals[ju]
        w[iu == ju] *= 0.5
        targets = keys[iu] + keys[ju]
        uniq, inv = np.unique(targets, axis=0, return_inverse=True)
        gain = np.bincount(inv.ravel(), weights=w, minlength=len(uniq))
        gain *= _zeta_of(kernel, uniq)
        for k, g in zip(map(tuple, uniq.tolist()), gain):
            if g != 0.0:
                out[k] = g
        for k, l in zip(map(tuple, keys.tolist()), loss):
            out[k] = out.get(k, 0.0) - l
    if src is not None:
        for k, s in src.entries.items():
            out[k] = out.get(k, 0.0) + s
    _check_rates(np.fromiter(out.values(), dtype=float, count=len(out)))
    return dict(sorted(out.items()))


class LatticeOperator:
    """Dense-index form of the truncated right-hand side.

    All compositions with ``1 <= |alpha| <= nmax`` are indexed in lexicographic
    order.  ``nmax`` defaults to the largest size where the gain cutoff is
    still positive, so no gain can leave the lattice.
    """

    def __init__(self, kernel: TruncatedKernel, dim: int, src: Source | None = None,
                 nmax: int | None = None):
        self.kernel = kernel
        self.dim = dim
        M = kernel.M
        reach = src.reach if src is not None else 0
        gain_top = math.ceil(M) - 1
        self.nmax = int(max(nmax or 0, gain_top, reach, 1))
        self.sites = enumerate_compositions(dim, self.nmax)
        self.sizes = self.sites.sum(axis=1)
        n = len(self.sites)
        radix = self.nmax + 1
        self._weights = radix ** np.arange(dim, dtype=np.int64)
        self._lookup = np.full(radix**dim, -1, dtype=np.int64)
        self._lookup[self.sites @ self._weights] = np.arange(n)

        self.kmat = np.asarray(kernel(self.sites[:, None, :], self.sites[None, :, :]), dtype=float)
        self.zeta = np.asarray(zeta_cutoff(M, self.sites), dtype=float)

        iu, ju = np.triu_indices(n)
        keep = self.sizes[iu] + self.sizes[ju] <= self.nmax
        iu, ju = iu[keep], ju[keep]
        tgt = self._lookup[(self.sites[iu] + self.sites[ju]) @ self._weights]
        w = self.kmat[iu, ju] * self.zeta[tgt]
        w[iu == ju] *= 0.5
        live = w != 0
        order = np.argsort(tgt[live], kind="stable")
        self._pi = iu[live][order]
        self._pj = ju[live][order]
        self._pt = tgt[live][order]
        self._pw = w[live][order]

        self.source = np.zeros(n)
        if src is not None:
            for k, s in src.entries.items():
                self.source[self.index(k)] += s

    def __len__(self):
        return len(self.sites)

    def index(self, alpha) -> int:
        alpha = np.asarray(alpha, dtype=np.int64)
        if alpha.shape != (self.dim,) or alpha.sum() > self.nmax or alpha.min() < 0:
            raise KeyError(tuple(alpha.tolist()))
        i = int(self._lookup[alpha @ self._weights])
        if i < 0:
            raise KeyError(tuple(alpha.tolist()))
        return i

    def to_vector(self, state: ClusterDistribution) -> np.ndarray:
        vec = np.zeros(len(self))
        for k, v in state.entries.items():
            try:
                vec[self.index(k)] = v
            except KeyError:
                raise SolverError(f"state entry {k} lies outside the lattice |a| <= {self.nmax}") from None
        return vec

    def to_state(self, vec: np.ndarray, time: float = 0.0) -> ClusterDistribution:
        return ClusterDistribution.from_arrays(self.sites, vec, cap=2 * self.kernel.M, time=time)

    def gain(self, n: np.ndarray) -> np.ndarray:
        prod = self._pw * n[self._pi] * n[self._pj]
        return np.bincount(self._pt, weights=prod, minlength=len(n))

    def loss(self, n: np.ndarray) -> np.ndarray:
        return n * (self.kmat @ n)

    def max_rate(self, n: np.ndarray) -> float:
        """Largest per-cluster loss rate ``max_a sum_b K(a,b) n_b``."""
        return float(np.max(self.kmat @ n)) if len(n) else 0.0

    def __call__(self, n: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            out = self.gain(n) - self.loss(n) + self.source
        _check_rates(out)
        return out

    def lower_bound(self) -> float:
        """Smallest kernel value over lattice pairs inside ``[1, M]^2``."""
        inner = self.sizes <= self.kernel.M
        return float(self.kmat[np.ix_(inner, inner)].min())


# Bogacki-Shampine 3(2)
_C2, _C3 = 0.5, 0.75
_B = (2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0)
_E = (2.0 / 9.0 - 7.0 / 24.0, 1.0 / 3.0 - 0.25, 4.0 / 9.0 - 1.0 / 3.0, -0.125)


def _prune(y: np.ndarray) -> np.ndarray:
    y[y < PRUNE_FLOOR] = 0.0
    return y


def step(op: LatticeOperator, n: np.ndarray, dt: float, cfg: SolverConfig | None = None,
         k1: np.ndarray | None = None, method: str = "bs23"):
    """Advance one accepted step.

    Returns ``(n_new, dt_used, dt_next, f_new)`` where ``f_new`` is the
    right-hand side at ``n_new`` (``None`` for the Euler method).  ``dt`` is
    reduced until the step is accurate and no concentration turns negative.
    """
    cfg = cfg or SolverConfig()
    if method == "euler":
        f = op(n) if k1 is None else k1
        new = n + dt * f
        if np.any(new < -PRUNE_FLOOR):
            raise SolverError("Euler step would create negative concentrations")
        return _prune(new), dt, dt, None
    if method != "bs23":
        raise ValueError(f"unknown method {method!r}")

    if k1 is None:
        k1 = op(n)
    dt_floor = 1e-14 * cfg.dt_init
    while True:
        if dt < dt_floor:
            raise SolverError(f"step size underflow (dt={dt:.3g}); the system looks stiff")
        k2 = op(np.maximum(n + _C2 * dt * k1, 0.0))
        k3 = op(np.maximum(n + _C3 * dt * k2, 0.0))
        new = n + dt * (_B[0] * k1 + _B[1] * k2 + _B[2] * k3)
        if np.any(new < -PRUNE_FLOOR):
            dt *= 0.5
            continue
        new = _prune(np.maximum(new, 0.0))
        k4 = op(new)
        err = dt * (_E[0] * k1 + _E[1] * k2 + _E[2] * k3 + _E[3] * k4)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(n), np.abs(new))
        enorm = float(np.max(np.abs(err) / scale)) if len(n) else 0.0
        if enorm <= 1.0:
            factor = 5.0 if enorm == 0 else min(5.0, cfg.safety * enorm ** (-1.0 / 3.0))
            return new, dt, min(cfg.dt_max, dt * max(1.0, factor)), k4
        dt *= max(0.2, cfg.safety * enorm ** (-1.0 / 3.0))


@dataclass
class SteadyResult:
    state: ClusterDistribution
    residual: float
    t_final: float
    converged: bool
    steps: int
    max_total_number: float
    min_concentration: float
    history: list = field(default_factory=list)
    beyond_cutoff_mass: float = 0.0

    def history_array(self) -> np.ndarray:
        return np.asarray(self.history, dtype=float)


def _residual(f: np.ndarray, scale: float) -> float:
    return float(np.max(np.abs(f))) / scale if len(f) else 0.0


def evolve_to_steady(state0: ClusterDistribution, cfg: SolverConfig, kernel: TruncatedKernel,
                     src: Source, op: LatticeOperator | None = None,
                     callback: Callable | None = None, callback_every: int = 0) -> SteadyResult:
    """March the truncated equation until the relative residual drops below tolerance.

    The residual is ``max|rhs| / max(|J0|, max s)``.  History rows are
    ``(t, total_number, mass_1..mass_d, residual, dt)``.  When
    ``callback_every > 0``, ``callback(steps, state)`` is called after every
    ``callback_every`` accepted steps.
    """
    if op is None:
        top = int(state0.sizes().max()) if len(state0) else 0
        op = LatticeOperator(kernel, state0.dim, src, nmax=top)
    n = op.to_vector(state0)
    j0 = src.injection()
    scale = max(float(j0.sum()), max(src.entries.values(), default=0.0))
    if scale == 0:
        scale = 1.0
    sites_f = op.sites.astype(float)

    t = state0.time
    f = op(n)
    res = _residual(f, scale)
    dt = cfg.dt_init
    history = [(t, float(n.sum()), *(n @ sites_f), res, 0.0)]
    max_n = float(n.sum())
    min_c = float(n.min()) if len(n) else 0.0
    steps = 0
    while res > cfg.steady_tol and steps < cfg.max_steps and t < cfg.max_time:
        # keeps the explicit scheme inside its stability region so the
        # residual can keep contracting once the error estimate is tiny
        rate = op.max_rate(n)
        if rate > 0:
            dt = min(dt, cfg.stability / rate)
        n, dt_used, dt, f = step(op, n, min(dt, cfg.max_time - t), cfg, k1=f)
        t += dt_used
        steps += 1
        res = _residual(f, scale)
        total = float(n.sum())
        max_n = max(max_n, total)
        min_c = min(min_c, float(n.min()))
        if steps % cfg.record_every == 0 or res <= cfg.steady_tol:
            history.append((t, total, *(n @ sites_f), res, dt_used))
        if callback is not None and callback_every > 0 and steps % callback_every == 0:
            callback(steps, op.to_state(n, time=t))
    converged = res <= cfg.steady_tol
    if not converged:
        logger.warning("no steady state after %d steps (t=%.3g, residual=%.3g)", steps, t, res)
    leak = float(n[op.sizes > kernel.M].sum())
    return SteadyResult(
        state=op.to_state(n, time=t),
        residual=res,
        t_final=t,
        converged=converged,
        steps=steps,
        max_total_number=max_n,
        min_concentration=min_c,
        history=history,
        beyond_cutoff_mass=leak,
    )
