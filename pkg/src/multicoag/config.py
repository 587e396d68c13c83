"""Run configuration: YAML text <-> validated :class:`RunConfig`.

A minimal config::

    d: 1
    kernel: {family: constant, c: 1.0}
    source:
      - {alpha: [1], rate: 1.0}
    truncation: {epsilon: 0.0, M: 64}

Optional sections are ``solver`` (fields of :class:`SolverConfig`),
``output``, ``diagnostics``, ``sweep`` and ``seed``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import yaml

from .kernels import KernelError, KernelSpec
from .lattice import Source
from .solver import SolverConfig
from .truncation import TruncatedKernel, TruncationParams

__all__ = ["ConfigError", "RunConfig", "parse_config", "dump_config", "load_config"]


class ConfigError(ValueError):
    """One or more configuration problems; ``problems`` lists them all."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


_SOLVER_FIELDS = {f.name for f in dataclasses.fields(SolverConfig)}


@dataclass
class OutputConfig:
    dir: str = "out"
    snapshot_every: int = 0  # accepted steps between intermediate snapshots; 0 = final only

    def __post_init__(self):
        if not isinstance(self.snapshot_every, int) or self.snapshot_every < 0:
            raise ValueError("snapshot_every must be a non-negative integer")


@dataclass
class DiagnosticsConfig:
    radii: list | None = None
    b: float = 0.5
    z_grid: list | None = None
    loc_radii: list | None = None
    zeta_band: float = 2.0
    eps_angle: float = 0.1
    theta: list | None = None


@dataclass
class SweepConfig:
    eps_list: list = field(default_factory=list)
    M_list: list = field(default_factory=list)
    R: float | None = None


@dataclass
class RunConfig:
    d: int
    kernel: KernelSpec
    source: Source
    epsilon: float
    M: float
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 0

    @property
    def L(self) -> int:
        return self.source.reach

    def truncation(self) -> TruncationParams:
        return TruncationParams(self.epsilon, self.M, max(self.L, 1))

    def truncated_kernel(self) -> TruncatedKernel:
        return TruncatedKernel(self.kernel, self.truncation())

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "kernel": self.kernel.to_dict(),
            "source": [{"alpha": list(k), "rate": v} for k, v in self.source.entries.items()],
            "truncation": {"epsilon": self.epsilon, "M": self.M},
            "solver": dataclasses.asdict(self.solver),
            "output": dataclasses.asdict(self.output),
            "diagnostics": dataclasses.asdict(self.diagnostics),
            "sweep": dataclasses.asdict(self.sweep),
            "seed": self.seed,
        }


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _section(data: dict, name: str, problems: list) -> dict:
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        problems.append(f"'{name}' must be a mapping")
        return {}
    return sec


def _build(cls, sec: dict, name: str, problems: list):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(sec) - names)
    if unknown:
        problems.append(f"'{name}' has unknown keys {unknown}")
    try:
        return cls(**{k: v for k, v in sec.items() if k in names})
    except (TypeError, ValueError) as exc:
        problems.append(f"'{name}': {exc}")
        return cls()


def _from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(["the config must be a mapping at top level"])
    problems: list[str] = []
    known = {"d", "kernel", "source", "truncation", "solver", "output", "diagnostics", "sweep", "seed"}
    unknown = sorted(set(data) - known)
    if unknown:
        problems.append(f"unknown top-level keys {unknown}")

    d = data.get("d")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        problems.append(f"'d' must be a positive integer, got {d!r}")
        d = None

    kernel = None
    try:
        kernel = KernelSpec.from_dict(data.get("kernel") or {})
    except (KernelError, KeyError, TypeError, ValueError) as exc:
        problems.append(f"'kernel': {exc}")
    if kernel is not None and d is not None:
        kdim = getattr(kernel, "dim", None)
        if kdim is not None and kdim != d:
            problems.append(f"kernel has {kdim} monomer volumes but d={d}")

    entries = {}
    raw_src = data.get("source")
    if not isinstance(raw_src, list) or not raw_src:
        problems.append("'source' must be a non-empty list of {alpha, rate} entries")
        raw_src = []
    for i, item in enumerate(raw_src):
        alpha = item.get("alpha") if isinstance(item, dict) else None
        rate = item.get("rate") if isinstance(item, dict) else None
        if not isinstance(alpha, list) or not all(isinstance(a, int) and a >= 0 for a in alpha):
            problems.append(f"source[{i}]: alpha must be a list of non-negative integers")
            continue
        if d is not None and len(alpha) != d:
            problems.append(f"source[{i}]: composition {alpha} does not have d={d} entries")
            continue
        if sum(alpha) < 1:
            problems.append(f"source[{i}]: the empty cluster cannot be injected")
            continue
        if not _finite(rate):
            problems.append(f"source[{i}]: rate must be a finite number, got {rate!r}")
            continue
        if rate < 0:
            problems.append(f"source[{i}]: negative injection rate {rate} (rates must be >= 0)")
            continue
        if tuple(alpha) in entries:
            problems.append(f"source[{i}]: duplicate composition {alpha}")
            continue
        entries[tuple(alpha)] = float(rate)
    source = Source(d, entries) if d is not None else None
    if source is not None and entries and source.total_rate == 0:
        problems.append("source has no positive rate")

    trunc = _section(data, "truncation", problems)
    eps, M = trunc.get("epsilon", 0.0), trunc.get("M")
    if not _finite(eps) or eps < 0:
        problems.append(f"truncation.epsilon must be finite and >= 0, got {eps!r}")
    if not _finite(M):
        problems.append(f"truncation.M must be a finite number, got {M!r}")
    elif source is not None and entries:
        L = source.reach
        if not M > 2 * L:
            problems.append(f"cutoff violates M>2L: M={M} but the source reaches L={L}")

    solver_sec = _section(data, "solver", problems)
    solver = _build(SolverConfig, solver_sec, "solver", problems)
    output = _build(OutputConfig, _section(data, "output", problems), "output", problems)
    diag = _build(DiagnosticsConfig, _section(data, "diagnostics", problems), "diagnostics", problems)
    sweep = _build(SweepConfig, _section(data, "sweep", problems), "sweep", problems)
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        problems.append(f"'seed' must be an integer, got {seed!r}")

    if problems:
        raise ConfigError(problems)
    return RunConfig(d, kernel, source, float(eps), float(M), solver, output, diag, sweep, seed)


def parse_config(text: str) -> RunConfig:
    """Parse and validate YAML text; all problems are reported together."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"not valid YAML: {exc}"]) from None
    return _from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
