"""Quadrature oracle for power-law constant-flux measures concentrated on a ray.

For ``F(r, theta) = C0 r^(-(gamma+1)/2 - d) delta(theta - theta0)`` the flux
through the sphere ``|x| = t`` is

    J(t) = C0^2 int_0^t r^d dr int_{t-r}^inf rho^(d-1) G(r, rho) / (r rho)^((gamma+1)/2 + d) drho

with ``G(r, rho) = K(r theta0, rho theta0)``.  Writing ``e = (gamma+1)/2`` the
powers of ``d`` cancel and the integrand is ``r^-e rho^(-e-1) G``.  For a
kernel of homogeneity ``gamma`` the value does not depend on ``t``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .kernels import KernelSpec, classify

__all__ = [
    "OracleError",
    "NonIntegrableError",
    "RayAnsatz",
    "RayKernel",
    "ray_kernel",
    "flux_integral",
    "flux_integral_reduced",
    "homogeneity_check",
]


class OracleError(RuntimeError):
    """Quadrature did not reach the requested tolerance."""


class NonIntegrableError(ValueError):
    """The flux integral diverges (``gamma + 2p >= 1``)."""


@dataclass(frozen=True)
class RayAnsatz:
    gamma: float
    C0: float = 1.0
    theta0: tuple = (1.0,)
    d: int = 1

    def __post_init__(self):
        if not self.C0 > 0:
            raise ValueError("C0 must be positive")
        theta = np.asarray(self.theta0, dtype=float)
        if self.d < 1 or theta.shape != (self.d,):
            raise ValueError(f"theta0 must have d={self.d} entries")
        if np.any(theta < 0) or not math.isclose(theta.sum(), 1.0, rel_tol=1e-12):
            raise ValueError("theta0 must lie on the simplex")

    @property
    def decay(self) -> float:
        """Radial exponent ``(gamma+1)/2 + d`` of the density."""
        return (self.gamma + 1) / 2 + self.d

    def density(self, r) -> np.ndarray:
        return self.C0 * np.asarray(r, dtype=float) ** (-self.decay)


@dataclass(frozen=True)
class RayKernel:
    """``G(r, rho)``: a kernel restricted to the ray through ``theta0``."""

    func: Callable
    gamma: float
    p: float = 0.0

    def __call__(self, r, rho):
        return self.func(r, rho)


def ray_kernel(spec: KernelSpec, theta0) -> RayKernel:
    """``G(r, rho) = K(r theta0, rho theta0)`` with the envelope exponents of ``K``."""
    theta = np.asarray(theta0, dtype=float)
    env = classify(spec)

    def g(r, rho):
        r = np.asarray(r, dtype=float)[..., None]
        rho = np.asarray(rho, dtype=float)[..., None]
        return spec(r * theta, rho * theta)

    return RayKernel(g, env.gamma, env.p)


def _constant_one(r, rho):
    return np.ones(np.broadcast(np.asarray(r), np.asarray(rho)).shape)


def flux_integral(ansatz: RayAnsatz, G: Callable | None = None, t: float = 1.0,
                  quad_tol: float = 1e-10, p: float | None = None,
                  return_error: bool = False, limit: int = 200):
    """``J(t)`` for the ray ansatz and kernel ``G`` (``G = 1`` when omitted).

    Divergence is decided from the exponents: both the ``r -> 0`` end and the
    ``rho -> inf`` end are integrable exactly when ``gamma + 2p < 1``;
    otherwise :class:`NonIntegrableError` is raised.  ``p`` is taken from
    ``G.p`` when ``G`` is a :class:`RayKernel`.

    The routine targets ``p = 0`` kernels, the setting of the ray ansatz;
    ``p > 0`` is accepted but converges slowly.

    The inner integral uses ``rho = (t - r)/v`` on ``v in (0, 1]``; every
    endpoint singularity is then algebraic and goes to QUADPACK's QAWS rule.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if G is None:
        G = _constant_one
    if p is None:
        p = getattr(G, "p", 0.0)
    gamma = ansatz.gamma
    if gamma + 2 * p >= 1:
        raise NonIntegrableError(
            f"gamma + 2p = {gamma + 2 * p:g} >= 1: the flux integral diverges "
            "(no constant-flux power law)")
    e = (gamma + 1) / 2
    # G ~ r^-q rho^(gamma+q) when one argument is small: fold those powers
    # into the algebraic weights so the quadrature sees bounded functions
    q = max(p, 0.0)
    inner_err = [0.0]

    def inner(r):
        # (t-r)^e * int_{t-r}^inf rho^(-e-1) G(r, rho) drho, via rho = (t-r)/v
        # QAWS samples the endpoints; stay a hair inside (0, t)
        r = min(max(r, 1e-14 * t), (1 - 1e-14) * t)
        span = t - r

        def f(v):
            v = max(v, 1e-300)
            return float(G(r, span / v)) * v ** (gamma + q)

        val, err = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(e - 1 - gamma - q, 0.0),
                                  epsabs=quad_tol * 1e-2, epsrel=quad_tol * 1e-2, limit=limit)
        inner_err[0] = max(inner_err[0], err)
        return val * (r * span) ** q

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(inner, 0.0, t, weight="alg", wvar=(-e - q, -e - q),
                                      epsabs=quad_tol, epsrel=quad_tol, limit=limit)
        except integrate.IntegrationWarning as exc:
            raise OracleError(f"quadrature did not converge at t={t}: {exc}") from None
    # inner errors propagate through the outer weight r^-e (t-r)^-e
    weight_mass = t ** (1 - 2 * e - 2 * q) * special.beta(1 - e - q, 1 - e - q)
    total_err = float(err + inner_err[0] * weight_mass)
    scale = ansatz.C0 ** 2
    if return_error:
        return scale * val, scale * total_err
    return scale * val


def flux_integral_reduced(ansatz: RayAnsatz, G: Callable | None = None,
                          quad_tol: float = 1e-10, p: float | None = None) -> float:
    """Closed one-dimensional form of :func:`flux_integral` for homogeneous ``G``.

    Scaling ``rho = r x`` and exchanging the order of integration gives

        J = C0^2 int_0^inf x^(-e-1) ln(1 + x) G(1, x) dx,

    which has no ``t`` left in it.  Used as an independent check of the
    two-dimensional quadrature; for ``G = 1, gamma = 0`` it equals ``2 pi``.
    """
    if G is None:
        G = _constant_one
    if p is None:
        p = getattr(G, "p", 0.0)
    gamma = ansatz.gamma
    if gamma + 2 * p >= 1:
        raise NonIntegrableError(f"gamma + 2p = {gamma + 2 * p:g} >= 1: the flux integral diverges")
    e = (gamma + 1) / 2

    def f(x):
        return x ** (-e - 1) * math.log1p(x) * float(G(1.0, x))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            lo, _ = integrate.quad(f, 0.0, 1.0, epsabs=quad_tol, epsrel=quad_tol, limit=200)
            hi, _ = integrate.quad(f, 1.0, np.inf, epsabs=quad_tol, epsrel=quad_tol, limit=200)
        except integrate.IntegrationWarning as exc:
            raise OracleError(f"quadrature did not converge: {exc}") from None
    return ansatz.C0 ** 2 * (lo + hi)


def homogeneity_check(G: Callable, lambdas, pairs, gamma: float | None = None) -> float:
    """``max |G(l r, l rho) - l^gamma G(r, rho)| / G(r, rho)`` over the samples."""
    if gamma is None:
        gamma = getattr(G, "gamma", None)
        if gamma is None or not math.isfinite(gamma):
            raise ValueError("gamma is needed (pass it or use a classified RayKernel)")
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    worst = 0.0
    for lam in lambdas:
        lhs = np.asarray(G(lam * pairs[:, 0], lam * pairs[:, 1]), dtype=float)
        ref = np.asarray(G(pairs[:, 0], pairs[:, 1]), dtype=float)
        dev = np.abs(lhs - lam ** gamma * ref) / np.abs(ref)
        worst = max(worst, float(dev.max()))
    return worst
