"""Per-species monomer fluxes across the surfaces ``|x| = R``.

On the lattice the flux of species ``j`` across ``|x| = R`` is the ordered
pair sum

    A_j(R) = sum_{|a| <= R} sum_{b : |a|+|b| > R} a_j K(a, b) n_a n_b,

i.e. the rate at which ``j``-monomers held in clusters of size at most ``R``
are carried past ``R`` by coagulation.  At a steady state of the truncated
problem it equals ``sum_{|a| <= R} a_j s_a`` for every ``R <= M/2``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .lattice import ClusterDistribution, Source

__all__ = [
    "FluxReport",
    "flux_vector",
    "flux_matrix",
    "flux_identity_check",
    "default_radii",
    "simplex_direction",
]


def simplex_direction(x) -> np.ndarray:
    """``x / |x|``, a point of the probability simplex."""
    x = np.asarray(x, dtype=float)
    tot = x.sum(axis=-1, keepdims=True)
    if np.any(tot < 1) or np.any(x < 0):
        raise ValueError("simplex_direction needs a composition with |x| >= 1")
    return x / tot


def flux_matrix(state: ClusterDistribution, kernel, radii) -> np.ndarray:
    """Fluxes ``A[r, j]`` for every radius in ``radii``."""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    keys = state.keys_array()
    vals = state.values_array()
    out = np.zeros((len(radii), state.dim))
    if len(vals) == 0:
        return out
    sizes = keys.sum(axis=1).astype(float)
    kmat = np.asarray(kernel(keys[:, None, :], keys[None, :, :]), dtype=float)
    # pair weights K(a,b) n_a n_b; rows index the inner cluster a
    pw = kmat * vals[:, None] * vals[None, :]
    for r, R in enumerate(radii):
        inner = sizes <= R
        if not inner.any():
            continue
        cross = sizes[inner][:, None] + sizes[None, :] > R
        rate = np.where(cross, pw[inner], 0.0).sum(axis=1)
        out[r] = rate @ keys[inner].astype(float)
    return out


def flux_vector(state: ClusterDistribution, kernel, R: float) -> np.ndarray:
    if R < 1:
        raise ValueError("R must be >= 1")
    return flux_matrix(state, kernel, [R])[0]


def default_radii(L: int, M: float) -> list[float]:
    """Geometric grid ``L, 2L, 4L, ...`` up to ``M/2``."""
    radii = []
    R = float(max(L, 1))
    while R <= M / 2:
        radii.append(R)
        R *= 2
    return radii


@dataclass
class FluxReport:
    radii: np.ndarray
    A: np.ndarray
    expected: np.ndarray
    rel_err: np.ndarray
    beyond_cutoff: np.ndarray
    max_rel_err: float

    def to_csv(self) -> str:
        d = self.A.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", *(f"A_{j + 1}" for j in range(d)),
                    *(f"expected_{j + 1}" for j in range(d)), "rel_err"])
        for R, a, e, err in zip(self.radii, self.A, self.expected, self.rel_err):
            w.writerow([repr(float(R)), *(repr(float(x)) for x in a),
                        *(repr(float(x)) for x in e), repr(float(err))])
        return buf.getvalue()


def flux_identity_check(state: ClusterDistribution, kernel, src: Source, radii=None,
                        M: float | None = None, floor: float = 1e-12) -> FluxReport:
    """Compare ``A(R)`` with the injected flux ``sum_{|a| <= R} a s_a``.

    Radii beyond ``M/2`` are flagged ``beyond_cutoff`` and excluded from
    ``max_rel_err``.  Species without injection are compared absolutely.
    """
    if M is None:
        M = getattr(kernel, "M", math.inf)
    if radii is None:
        radii = default_radii(src.reach, M)
    radii = np.asarray(sorted(float(r) for r in radii))
    if len(radii) == 0:
        raise ValueError("no radii to check")
    A = flux_matrix(state, kernel, radii)
    skeys = src.keys_array()
    svals = src.values_array()
    ssize = skeys.sum(axis=1)
    expected = np.array([svals[ssize <= R] @ skeys[ssize <= R].astype(float) for R in radii])
    denom = np.where(expected > floor, expected, 1.0)
    rel = np.max(np.abs(A - expected) / denom, axis=1)
    beyond = radii > M / 2
    max_rel = float(rel[~beyond].max()) if (~beyond).any() else math.nan
    return FluxReport(radii, A, expected, rel, beyond, max_rel)
