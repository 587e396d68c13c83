"""
When do steady states exist?
============================

Steady injection solutions exist when the kernel exponents satisfy
``gamma + 2p < 1``.  This script checks the criterion on the built-in
kernels, evaluates the constant-flux integral on both sides of the
threshold, and runs the truncation sweeps that probe it numerically.
"""

# %%
from multicoag import Brownian, Constant, EnvelopePower, FreeMolecular, ProductPower, Source, classify
from multicoag.diagnostics import existence_sweep
from multicoag.kernels import existence_predicate
from multicoag.oracle import NonIntegrableError, RayAnsatz, flux_integral, flux_integral_reduced, ray_kernel
from multicoag.solver import SolverConfig

for k in (Constant(1.0), Brownian((1.0, 2.0)), FreeMolecular((1.0, 2.0)), ProductPower(0.0, 0.5),
          EnvelopePower(1.2, 0.0)):
    env = classify(k)
    print(f"{k!r:45s} gamma={env.gamma:+.3f} p={env.p:.3f} exists={existence_predicate(env)}")

# %% [markdown]
# Flux of a power law on a single ray.  For the unit kernel the value is
# ``2 pi`` at every ``t``; at ``gamma = 1.2`` the integral diverges.

# %%
for t in (1.0, 2.0, 4.0):
    print(t, flux_integral(RayAnsatz(0.0), t=t))
G = ray_kernel(EnvelopePower(0.5, 0.0), (1.0,))
print("gamma=0.5:", flux_integral(RayAnsatz(0.5), G), flux_integral_reduced(RayAnsatz(0.5), G))
try:
    flux_integral(RayAnsatz(1.2))
except NonIntegrableError as exc:
    print("gamma=1.2:", exc)

# %% [markdown]
# Truncation sweeps.  At fixed ``eps`` the truncated kernel is bounded by
# ``1/eps``, so no row can run away in ``M``.  The constant kernel settles
# on every axis; for ``gamma = 1.2`` the number of clusters falls with ``M``
# while the tail keeps moving, and the grid is too short to call it.

# %%
src = Source(1, {(1,): 1.0})
cfg = SolverConfig(steady_tol=1e-8)
for base, R in ((Constant(1.0), None), (EnvelopePower(1.2, 0.0), 8)):
    sw = existence_sweep(base, src, [0.1, 0.01], [16, 32, 64], cfg, R=R)
    print(f"{base!r}: verdict {sw.verdict} {sw.axis_verdicts}")
    print(sw.to_csv())
