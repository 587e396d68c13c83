"""Stationary injection solutions of the multicomponent Smoluchowski equation.

Kernels are classified by their homogeneity ``gamma`` and ratio exponent
``p``; stationary solutions with a localized source exist when
``gamma + 2p < 1``.  The package builds them through a bounded, compactly
supported truncation of the kernel, relaxes the truncated dynamics to a
steady state and checks the result against flux balance, power-law tails
and localization along the injection direction.
"""
from .config import ConfigError, RunConfig, dump_config, load_config, parse_config
from .diagnostics import (
    ExponentFit,
    SweepResult,
    existence_sweep,
    fit_tail_exponent,
    isotropic_ratio,
    localization_ratio,
)
from .flux import FluxReport, flux_identity_check, flux_vector
from .kernels import (
    Brownian,
    Constant,
    Envelope,
    EnvelopePower,
    FreeMolecular,
    KernelSpec,
    ProductPower,
    Rescaled,
    Tabulated,
    classify,
    eval_kernel,
    existence_predicate,
    rescale,
)
from .lattice import (
    ClusterDistribution,
    Source,
    dyadic_window_mass,
    moments,
    read_snapshot,
    tail_count,
    write_snapshot,
)
from .oracle import NonIntegrableError, RayAnsatz, flux_integral, homogeneity_check, ray_kernel
from .solver import LatticeOperator, SolverConfig, SteadyResult, evolve_to_steady, rhs, step
from .truncation import TruncatedKernel, TruncationParams

__version__ = "0.1.0"
