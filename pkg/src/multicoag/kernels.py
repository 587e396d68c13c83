"""Coagulation kernels on the integer lattice.

Every kernel is a callable ``K(a, b)`` acting on arrays of compositions whose
last axis has length ``d``; leading axes broadcast.  Real-valued (continuous)
arguments are accepted as well, which is what the ray oracle relies on.

Kernels are classified by an :class:`Envelope` ``(gamma, p, c1, c2)`` such that

    c1 * S**gamma * Phi(s) <= K(a, b) <= c2 * S**gamma * Phi(s),

with ``S = |a| + |b|``, ``s = |a| / S`` and ``Phi(s) = (s * (1 - s))**(-p)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Envelope",
    "KernelSpec",
    "Constant",
    "FreeMolecular",
    "Brownian",
    "ProductPower",
    "EnvelopePower",
    "Tabulated",
    "Rescaled",
    "KernelError",
    "eval_kernel",
    "classify",
    "existence_predicate",
    "rescale",
    "envelope_profile",
]

# safety margin applied to sampled envelope constants
SAMPLING_MARGIN = 0.05
# largest tolerated change of sampled exponents between small and large sizes
EXPONENT_CONSISTENCY = 0.05


class KernelError(ValueError):
    """Invalid kernel parameters or arguments."""


@dataclass(frozen=True)
class Envelope:
    """Power-law envelope of a kernel.

    ``classified`` is False when a sampled classification could not bracket
    the kernel; the numbers are then best-effort estimates.
    """

    gamma: float
    p: float
    c1: float
    c2: float
    classified: bool = True
    note: str = ""

    def __post_init__(self):
        if self.classified and not (0 < self.c1 <= self.c2):
            raise KernelError(f"need 0 < c1 <= c2, got c1={self.c1}, c2={self.c2}")

    @property
    def exponent(self) -> float:
        """gamma + 2p, the quantity deciding existence."""
        return self.gamma + 2.0 * self.p

    def bounds(self, a, b):
        """Lower and upper envelope values at ``(a, b)``."""
        prof = envelope_profile(a, b, self.gamma, self.p)
        return self.c1 * prof, self.c2 * prof


def _norm(x) -> np.ndarray:
    return np.sum(np.asarray(x, dtype=float), axis=-1)


def envelope_profile(a, b, gamma: float, p: float) -> np.ndarray:
    """``S**gamma * Phi(|a| / S)`` written in a swap-symmetric form."""
    na, nb = _norm(a), _norm(b)
    tot = na + nb
    # S^gamma (s(1-s))^-p == S^(gamma+2p) |a|^-p |b|^-p
    return tot ** (gamma + 2.0 * p) * (na * nb) ** (-p)


class KernelSpec:
    """Base class for kernel families.

    Subclasses implement :meth:`__call__` and :meth:`envelope`.  ``dim`` is the
    number of species the kernel is tied to, or None when any ``d`` works.
    """

    dim: int | None = None

    def __call__(self, a, b) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def envelope(self) -> Envelope:  # pragma: no cover - abstract
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError

    @staticmethod
    def from_dict(data: dict) -> "KernelSpec":
        data = dict(data)
        family = str(data.pop("family")).lower()
        try:
            cls = _FAMILIES[family]
        except KeyError:
            raise KernelError(f"unknown kernel family {family!r}") from None
        if cls is Rescaled:
            base = KernelSpec.from_dict(data.pop("base"))
            return Rescaled(base, float(data.pop("p")))
        if "volumes" in data:
            data["volumes"] = tuple(float(v) for v in data["volumes"])
        return cls(**data)


@dataclass(frozen=True)
class Constant(KernelSpec):
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise KernelError("constant kernel needs c > 0")

    def __call__(self, a, b):
        shape = np.broadcast_shapes(np.shape(a)[:-1], np.shape(b)[:-1])
        return np.full(shape, float(self.c))

    def envelope(self):
        return Envelope(0.0, 0.0, self.c, self.c)

    def to_dict(self):
        return {"family": "constant", "c": self.c}


class _VolumeKernel(KernelSpec):
    """Kernels of the cluster volume ``V(a) = sum_j a_j v_j``."""

    volumes: tuple[float, ...]
    gamma: float
    p: float

    def _check(self):
        if len(self.volumes) == 0:
            raise KernelError("need at least one monomer volume")
        if any(not v > 0 for v in self.volumes):
            raise KernelError("monomer volumes must be positive")

    @property
    def dim(self):
        return len(self.volumes)

    def volume(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != len(self.volumes):
            raise KernelError(
                f"composition has {a.shape[-1]} species, kernel has {len(self.volumes)}"
            )
        return a @ np.asarray(self.volumes, dtype=float)

    def envelope(self):
        c1, c2 = _sample_volume_constants(self)
        return Envelope(self.gamma, self.p, c1, c2)


@dataclass(frozen=True)
class FreeMolecular(_VolumeKernel):
    """Free molecular regime (ballistic) kernel."""

    volumes: tuple[float, ...] = (1.0,)
    gamma = 1.0 / 6.0
    p = 0.5

    def __post_init__(self):
        self._check()

    def __call__(self, a, b):
        va, vb = self.volume(a), self.volume(b)
        return np.sqrt(1.0 / va + 1.0 / vb) * (np.cbrt(va) + np.cbrt(vb)) ** 2

    def to_dict(self):
        return {"family": "free_molecular", "volumes": list(self.volumes)}


@dataclass(frozen=True)
class Brownian(_VolumeKernel):
    """Diffusive (Brownian) coagulation kernel."""

    volumes: tuple[float, ...] = (1.0,)
    gamma = 0.0
    p = 1.0 / 3.0

    def __post_init__(self):
        self._check()

    def __call__(self, a, b):
        ra, rb = np.cbrt(self.volume(a)), np.cbrt(self.volume(b))
        return (1.0 / ra + 1.0 / rb) * (ra + rb)

    def to_dict(self):
        return {"family": "brownian", "volumes": list(self.volumes)}


@dataclass(frozen=True)
class ProductPower(KernelSpec):
    """``|a|^(gamma+lam) |b|^-lam + |b|^(gamma+lam) |a|^-lam``."""

    gamma: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if max(self.gamma + self.lam, -self.lam) > 1:
            warnings.warn(
                "product kernel violates the non-gelling guard max(gamma+lam, -lam) <= 1",
                stacklevel=3,
            )

    def __call__(self, a, b):
        na, nb = _norm(a), _norm(b)
        e = self.gamma + self.lam
        return na**e * nb ** (-self.lam) + nb**e * na ** (-self.lam)

    def envelope(self):
        p = max(self.lam, -(self.gamma + self.lam))
        # ratio K / (S^gamma Phi) = s^e + (1-s)^e with e = |gamma + 2 lam|;
        # extremes at s -> 0 (value 1) and s = 1/2 (value 2^(1-e))
        e = abs(self.gamma + 2.0 * self.lam)
        mid = 2.0 ** (1.0 - e)
        return Envelope(self.gamma, p, min(1.0, mid), max(1.0, mid))

    def to_dict(self):
        return {"family": "product_power", "gamma": self.gamma, "lam": self.lam}


@dataclass(frozen=True)
class EnvelopePower(KernelSpec):
    """Kernel sitting exactly on its envelope: ``c S^gamma Phi(s)``."""

    gamma: float = 0.0
    p: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise KernelError("envelope kernel needs c > 0")

    def __call__(self, a, b):
        return self.c * envelope_profile(a, b, self.gamma, self.p)

    def envelope(self):
        return Envelope(self.gamma, self.p, self.c, self.c)

    def to_dict(self):
        return {"family": "envelope_power", "gamma": self.gamma, "p": self.p, "c": self.c}


@dataclass(frozen=True)
class Tabulated(KernelSpec):
    """User-supplied kernel, classified by sampling.

    ``func`` receives composition arrays like any other kernel and must be
    symmetric and positive.
    """

    func: Callable = field(compare=False)
    dim: int | None = 1
    seed: int = 0
    max_size: float = 1e6

    def __call__(self, a, b):
        return np.asarray(self.func(a, b), dtype=float)

    def envelope(self):
        return _sample_classify(self, self.dim or 1, self.seed, self.max_size)

    def to_dict(self):
        raise KernelError("tabulated kernels cannot be serialised")


@dataclass(frozen=True)
class Rescaled(KernelSpec):
    """``K(a, b) |a|^q |b|^q``; maps solutions ``n`` to ``|a|^-q n``."""

    base: KernelSpec
    q: float

    @property
    def dim(self):
        return self.base.dim

    def __call__(self, a, b):
        w = (_norm(a) * _norm(b)) ** self.q
        return self.base(a, b) * w

    def envelope(self):
        env = self.base.envelope()
        return Envelope(
            env.gamma + 2.0 * self.q,
            env.p - self.q,
            env.c1,
            env.c2,
            classified=env.classified,
            note=env.note,
        )

    def to_dict(self):
        return {"family": "rescaled", "base": self.base.to_dict(), "p": self.q}


_FAMILIES: dict[str, type[KernelSpec]] = {
    "constant": Constant,
    "free_molecular": FreeMolecular,
    "brownian": Brownian,
    "product_power": ProductPower,
    "envelope_power": EnvelopePower,
    "rescaled": Rescaled,
}


def _sample_volume_constants(spec: _VolumeKernel, n_ratio: int = 801):
    """Envelope constants of a volume kernel by sampling size ratios.

    Both kernels are homogeneous in the volumes, so the ratio to the envelope
    depends only on ``s = |a|/S`` and on the effective monomer volume of each
    argument, which lies between min(v) and max(v).
    """
    vols = np.asarray(spec.volumes, dtype=float)
    ks = np.unique(np.geomspace(vols.min(), vols.max(), 5))
    half = np.geomspace(1e-9, 0.5, n_ratio // 2 + 1)
    s = np.concatenate([half, 1.0 - half[::-1][1:]])
    ka, kb, ss = np.meshgrid(ks, ks, s, indexing="ij")
    # unit-species stand-ins: a has |a|=s with volume ka*s, b has |b|=1-s
    va, vb = ka * ss, kb * (1.0 - ss)
    if isinstance(spec, FreeMolecular):
        k = np.sqrt(1.0 / va + 1.0 / vb) * (np.cbrt(va) + np.cbrt(vb)) ** 2
    else:
        k = (1.0 / np.cbrt(va) + 1.0 / np.cbrt(vb)) * (np.cbrt(va) + np.cbrt(vb))
    ratio = k * (ss * (1.0 - ss)) ** spec.p
    return (1.0 - SAMPLING_MARGIN) * ratio.min(), (1.0 + SAMPLING_MARGIN) * ratio.max()


def _sample_classify(spec: KernelSpec, d: int, seed: int, max_size: float,
                     n_pairs: int = 4000) -> Envelope:
    """Envelope of ``spec`` from random lattice pairs with sizes up to ``max_size``."""
    rng = np.random.default_rng(seed)
    sizes = np.exp(rng.uniform(0.0, math.log(max_size), size=(2, n_pairs)))
    sizes = np.maximum(1, np.round(sizes)).astype(np.int64)
    a = _random_compositions(rng, sizes[0], d)
    b = _random_compositions(rng, sizes[1], d)
    k = np.asarray(spec(a, b), dtype=float)
    na, nb = sizes.astype(float)
    tot = na + nb
    if not np.all(np.isfinite(k)) or np.any(k <= 0):
        return Envelope(math.nan, math.nan, math.nan, math.nan, classified=False,
                        note="kernel not finite and positive on samples")
    # tightest sandwich: minimise the spread of log K - gamma log S + p log(s(1-s))
    x, y, logk = np.log(tot), np.log(na * nb / tot**2), np.log(k)
    gamma, p = _minimax_exponents(x, y, logk)
    ratio = k / envelope_profile(a, b, gamma, p)
    c1, c2 = ratio.min(), ratio.max()
    # a true power law gives the same exponents on small and on large sizes
    small = tot <= np.median(tot)
    g_lo, p_lo = _minimax_exponents(x[small], y[small], logk[small])
    g_hi, p_hi = _minimax_exponents(x[~small], y[~small], logk[~small])
    shift = max(abs(g_lo - g_hi), abs(p_lo - p_hi))
    if shift > EXPONENT_CONSISTENCY:
        return Envelope(gamma, p, c1, c2, classified=False,
                        note=f"exponents change with scale (shift {shift:.3g} between size halves)")
    return Envelope(gamma, p, (1 - SAMPLING_MARGIN) * c1, (1 + SAMPLING_MARGIN) * c2)


def _minimax_exponents(x, y, logk) -> tuple[float, float]:
    """``(gamma, p)`` minimising ``max - min`` of ``logk - gamma x + p y``.

    Solved as a linear program in ``(gamma, p, lo, hi)``.
    """
    from scipy.optimize import linprog

    n = len(x)
    one, zero = np.ones(n), np.zeros(n)
    # lo <= logk - gamma x + p y  and  logk - gamma x + p y <= hi
    a_ub = np.vstack([np.column_stack([x, -y, one, zero]),
                      np.column_stack([-x, y, zero, -one])])
    b_ub = np.concatenate([logk, -logk])
    res = linprog([0.0, 0.0, -1.0, 1.0], A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None)] * 4, method="highs")
    if not res.success:
        raise KernelError(f"envelope fit failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


def _random_compositions(rng, sizes: np.ndarray, d: int) -> np.ndarray:
    """Random compositions with prescribed total monomer counts."""
    if d == 1:
        return sizes[:, None]
    w = rng.dirichlet(np.ones(d), size=sizes.size)
    parts = np.floor(w * sizes[:, None]).astype(np.int64)
    parts[:, 0] += sizes - parts.sum(axis=1)
    return parts


def eval_kernel(spec: KernelSpec, a: Sequence[int], b: Sequence[int]) -> float:
    """Rate of a single coagulation event ``a + b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise KernelError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if spec.dim is not None and a.shape[0] != spec.dim:
        raise KernelError(f"kernel expects d={spec.dim}, got d={a.shape[0]}")
    if np.any(a < 0) or np.any(b < 0) or a.sum() < 1 or b.sum() < 1:
        raise KernelError("compositions must be non-negative with |a|, |b| >= 1")
    return float(spec(a, b))


def classify(spec: KernelSpec) -> Envelope:
    """Envelope ``(gamma, p, c1, c2)`` of a kernel."""
    return spec.envelope()


def existence_predicate(env: Envelope) -> bool:
    """True iff stationary injection solutions exist, i.e. ``gamma + 2p < 1``."""
    return env.gamma + 2.0 * env.p < 1.0


def rescale(spec: KernelSpec, p: float) -> KernelSpec:
    """Kernel ``K(a, b) |a|^p |b|^p``."""
    if p == 0:
        return spec
    return Rescaled(spec, float(p))
