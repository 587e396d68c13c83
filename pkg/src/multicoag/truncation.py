"""Bounded, compactly supported kernels and the gain cutoff.

The base kernel ``K = S^gamma Phi`` is first clipped to
``K_eps = min(S^gamma, 1/eps) Phi + eps`` and then multiplied by a cutoff
``omega_M`` that equals one on ``[1, M]^2`` and vanishes once either size
reaches ``2M``.  The gain term of the evolution is switched off above ``M``
by ``zeta_M``.  Both cutoffs are linear ramps between their plateaus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import Envelope, KernelError, KernelSpec, classify
from .lattice import enumerate_compositions

__all__ = [
    "TruncationParams",
    "TruncatedKernel",
    "k_eps",
    "omega",
    "zeta",
    "k_eps_M",
]


def _norm(x) -> np.ndarray:
    return np.sum(np.asarray(x, dtype=float), axis=-1)


@dataclass(frozen=True)
class TruncationParams:
    epsilon: float
    M: float
    L: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.M > 2 * self.L:
            raise ValueError(
                f"cutoff violates M>2L (M={self.M}, L={self.L}): the source must sit "
                "well inside the region where the gain term is active"
            )


def _gamma_of(base: KernelSpec) -> float:
    env = classify(base)
    if not env.classified or not math.isfinite(env.gamma):
        raise KernelError(f"base kernel is not classified: {env.note}")
    return env.gamma


def _k_eps(base: KernelSpec, gamma: float, eps: float, a, b) -> np.ndarray:
    s_gamma = (_norm(a) + _norm(b)) ** gamma
    k = np.asarray(base(a, b), dtype=float)
    if eps == 0:
        return k
    phi = k / s_gamma
    return np.minimum(s_gamma, 1.0 / eps) * phi + eps


def k_eps(base: KernelSpec, eps: float, a, b) -> np.ndarray:
    """``min(S^gamma, 1/eps) * Phi(a, b) + eps`` with ``Phi = K / S^gamma``.

    ``eps = 0`` returns the base kernel unchanged.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    return _k_eps(base, _gamma_of(base), eps, a, b)


def _ramp(r, M: float):
    return np.clip((2.0 * M - r) / M, 0.0, 1.0)


def omega(M: float, a, b) -> np.ndarray:
    """Cutoff weight: 1 on ``[1, M]^2``, 0 once ``|a| >= 2M`` or ``|b| >= 2M``."""
    return _ramp(_norm(a), M) * _ramp(_norm(b), M)


def zeta(M: float, a) -> np.ndarray:
    """Gain cutoff: 1 for ``|a| <= M/2``, 0 for ``|a| >= M``, linear between."""
    return np.clip((M - _norm(a)) / (0.5 * M), 0.0, 1.0)


def k_eps_M(base: KernelSpec, params: TruncationParams, a, b) -> np.ndarray:
    return k_eps(base, params.epsilon, a, b) * omega(params.M, a, b)


@dataclass(frozen=True)
class TruncatedKernel(KernelSpec):
    """``K_{eps,M}`` as a kernel object; evaluates like any :class:`KernelSpec`."""

    base: KernelSpec
    params: TruncationParams
    gamma: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        if math.isnan(self.gamma):
            object.__setattr__(self, "gamma", _gamma_of(self.base))

    @property
    def dim(self):
        return self.base.dim

    @property
    def M(self) -> float:
        return self.params.M

    @property
    def epsilon(self) -> float:
        return self.params.epsilon

    def __call__(self, a, b):
        k = _k_eps(self.base, self.gamma, self.params.epsilon, a, b)
        return k * omega(self.params.M, a, b)

    def zeta(self, a) -> np.ndarray:
        return zeta(self.params.M, a)

    def envelope(self) -> Envelope:
        return classify(self.base)

    def sandwich(self, dim: int) -> tuple[float, float]:
        """Exact ``(a1, a2)``: min and max of the kernel over lattice pairs in ``[1, M]^2``."""
        sites = enumerate_compositions(dim, math.floor(self.params.M))
        lo, hi = math.inf, 0.0
        # row blocks keep memory bounded for large lattices
        step = max(1, 2_000_000 // max(len(sites), 1))
        for i in range(0, len(sites), step):
            k = self(sites[i:i + step, None, :], sites[None, :, :])
            lo = min(lo, float(k.min()))
            hi = max(hi, float(k.max()))
        return lo, hi

    def to_dict(self):
        return {"base": self.base.to_dict(), "epsilon": self.params.epsilon, "M": self.params.M}
