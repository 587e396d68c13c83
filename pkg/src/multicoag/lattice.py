"""Sparse cluster distributions, sources and their moments."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "PRUNE_FLOOR",
    "LatticeError",
    "ClusterDistribution",
    "Source",
    "Moments",
    "moments",
    "dyadic_window_mass",
    "tail_count",
    "write_snapshot",
    "read_snapshot",
    "format_snapshot",
    "parse_snapshot",
]

# concentrations below this are dropped from the support
PRUNE_FLOOR = 1e-30


class LatticeError(ValueError):
    """Malformed composition, state or snapshot."""


Composition = tuple[int, ...]


def _as_composition(alpha, dim: int) -> Composition:
    comp = tuple(int(a) for a in alpha)
    if len(comp) != dim:
        raise LatticeError(f"composition {comp} does not have d={dim} entries")
    if any(a < 0 for a in comp):
        raise LatticeError(f"composition {comp} has negative entries")
    if sum(comp) < 1:
        raise LatticeError("the empty cluster is not a valid composition")
    return comp


@dataclass
class ClusterDistribution:
    """Concentrations ``n_alpha`` on a sparse lattice.

    Absent keys are zero.  ``cap`` bounds ``|alpha|``; it is ``2M`` for a
    truncated problem and infinite otherwise.
    """

    dim: int
    entries: dict[Composition, float] = field(default_factory=dict)
    cap: float = math.inf
    time: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise LatticeError("d must be at least 1")
        clean = {}
        for key, val in self.entries.items():
            comp = _as_composition(key, self.dim)
            val = float(val)
            if not math.isfinite(val) or val < 0:
                raise LatticeError(f"concentration at {comp} is {val}")
            if sum(comp) > self.cap:
                raise LatticeError(f"|{comp}| exceeds the cap {self.cap}")
            if val > 0:
                clean[comp] = val
        self.entries = dict(sorted(clean.items()))

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, alpha) -> float:
        return self.entries.get(tuple(int(a) for a in alpha), 0.0)

    def keys_array(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.dim), dtype=np.int64)
        return np.array(list(self.entries), dtype=np.int64)

    def values_array(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))

    def sizes(self) -> np.ndarray:
        return self.keys_array().sum(axis=1)

    @classmethod
    def from_arrays(cls, keys, values, cap=math.inf, time=0.0, floor=PRUNE_FLOOR):
        keys = np.asarray(keys, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if keys.ndim != 2:
            raise LatticeError("keys must be a (n, d) array")
        if np.any(values < 0):
            raise LatticeError("negative concentration")
        keep = values >= floor
        entries = {tuple(int(x) for x in k): float(v) for k, v in zip(keys[keep], values[keep])}
        return cls(keys.shape[1], entries, cap=cap, time=time)

    def total_number(self) -> float:
        return float(self.values_array().sum())


@dataclass
class Source:
    """Injection rates ``s_alpha`` with finite support."""

    dim: int
    entries: dict[Composition, float]

    def __post_init__(self):
        clean = {}
        for key, val in self.entries.items():
            comp = _as_composition(key, self.dim)
            val = float(val)
            if not math.isfinite(val) or val < 0:
                raise LatticeError(f"source rate at {comp} must be finite and >= 0, got {val}")
            if val > 0:
                clean[comp] = val
        self.entries = dict(sorted(clean.items()))

    @property
    def reach(self) -> int:
        """Largest ``|alpha|`` with ``s_alpha > 0`` (0 for an empty source)."""
        return max((sum(k) for k in self.entries), default=0)

    @property
    def total_rate(self) -> float:
        return float(sum(self.entries.values()))

    def injection(self) -> np.ndarray:
        """Monomer injection vector ``J0 = sum_alpha alpha s_alpha``."""
        j0 = np.zeros(self.dim)
        for key, val in self.entries.items():
            j0 += val * np.asarray(key, dtype=float)
        return j0

    def direction(self) -> np.ndarray:
        j0 = self.injection()
        return j0 / j0.sum()

    def keys_array(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.dim), dtype=np.int64)
        return np.array(list(self.entries), dtype=np.int64)

    def values_array(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))


@dataclass(frozen=True)
class Moments:
    total_number: float
    species_mass: np.ndarray
    injection: np.ndarray

    @property
    def injection_norm(self) -> float:
        """``|J0| = sum_alpha |alpha| s_alpha``."""
        return float(self.injection.sum())


def moments(state: ClusterDistribution, src: Source | None = None) -> Moments:
    if src is not None and src.dim != state.dim:
        raise LatticeError(f"state has d={state.dim}, source has d={src.dim}")
    keys = state.keys_array().astype(float)
    vals = state.values_array()
    # entries are kept in sorted key order, so the sums are reproducible
    mass = vals @ keys if len(vals) else np.zeros(state.dim)
    inj = src.injection() if src is not None else np.zeros(state.dim)
    return Moments(float(vals.sum()), mass, inj)


def dyadic_window_mass(state: ClusterDistribution, z: float, b: float = 0.5) -> float:
    """``(1/z) * sum of n_alpha over b z <= |alpha| <= z``."""
    if not 0 < b < 1:
        raise LatticeError(f"window ratio b must lie in (0, 1), got {b}")
    if not z > 0:
        raise LatticeError("z must be positive")
    sizes = state.sizes()
    inside = (sizes >= b * z) & (sizes <= z)
    return float(state.values_array()[inside].sum() / z)


def tail_count(state: ClusterDistribution, R: float) -> float:
    """Number of clusters with ``|alpha| >= R``."""
    return float(state.values_array()[state.sizes() >= R].sum())


# --- snapshots -------------------------------------------------------------

def format_snapshot(state: ClusterDistribution, M: float) -> str:
    out = io.StringIO()
    out.write(f"# d={state.dim} M={float(M)!r} t={float(state.time)!r}\n")
    for key, val in state.entries.items():
        out.write(" ".join(str(k) for k in key))
        out.write(f" {val:.17g}\n")
    return out.getvalue()


def parse_snapshot(text: str) -> tuple[ClusterDistribution, float]:
    """Parse snapshot text; returns the state and its cutoff ``M``."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise LatticeError("line 1: missing '# d=<d> M=<M> t=<time>' header")
    header = {}
    for tok in lines[0][1:].split():
        name, sep, value = tok.partition("=")
        if not sep:
            raise LatticeError(f"line 1: bad header token {tok!r}")
        header[name] = value
    try:
        dim = int(header["d"])
        M = float(header["M"])
        t = float(header.get("t", 0.0))
    except (KeyError, ValueError) as exc:
        raise LatticeError(f"line 1: bad header ({exc})") from None
    entries = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise LatticeError(f"line {lineno}: expected {dim + 1} fields, got {len(parts)}")
        try:
            comp = tuple(int(x) for x in parts[:dim])
            val = float(parts[dim])
        except ValueError:
            raise LatticeError(f"line {lineno}: cannot parse {line!r}") from None
        if comp in entries:
            raise LatticeError(f"line {lineno}: duplicate composition {comp}")
        try:
            _as_composition(comp, dim)
        except LatticeError as exc:
            raise LatticeError(f"line {lineno}: {exc}") from None
        if not math.isfinite(val) or val < 0:
            raise LatticeError(f"line {lineno}: invalid concentration {parts[dim]}")
        entries[comp] = val
    return ClusterDistribution(dim, entries, cap=2 * M, time=t), M


def write_snapshot(path, state: ClusterDistribution, M: float) -> None:
    Path(path).write_text(format_snapshot(state, M))


def read_snapshot(path) -> tuple[ClusterDistribution, float]:
    return parse_snapshot(Path(path).read_text())


def merge(states: Iterable[ClusterDistribution]) -> ClusterDistribution:
    """Sum of distributions (used for additivity checks)."""
    states = list(states)
    total: dict[Composition, float] = {}
    for st in states:
        for k, v in st.entries.items():
            total[k] = total.get(k, 0.0) + v
    return ClusterDistribution(states[0].dim, total)



def enumerate_compositions(dim: int, nmax: int, nmin: int = 1) -> np.ndarray:
    """All compositions with ``nmin <= |alpha| <= nmax`` in lexicographic order."""
    if dim < 1:
        raise LatticeError("d must be at least 1")
    nmax = int(nmax)
    grids = np.indices((nmax + 1,) * dim).reshape(dim, -1).T
    tot = grids.sum(axis=1)
    return np.ascontiguousarray(grids[(tot >= nmin) & (tot <= nmax)])
