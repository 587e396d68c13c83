"""Command line driver: ``python -m multicoag <subcommand> ...``.

Exit status is 0 on success, 2 when a run finished without reaching a steady
state (or a sweep has such a cell), and 1 for configuration or usage errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import ConfigError, RunConfig, load_config
from .flux import flux_identity_check
from .kernels import EnvelopePower, KernelError, classify, existence_predicate
from .lattice import ClusterDistribution, LatticeError, read_snapshot, write_snapshot
from .oracle import NonIntegrableError, OracleError, RayAnsatz, flux_integral, ray_kernel
from .solver import SolverError, evolve_to_steady
from .truncation import TruncatedKernel, TruncationParams

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_ERROR", "EXIT_NOT_CONVERGED"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for "not steady"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multicoag", description="Steady states of multicomponent coagulation with injection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{classify,simulate,flux,diagnose,sweep,oracle}",
                           parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("classify", help="envelope exponents and constants of the configured kernel")
    s.add_argument("--config", required=True)

    s = sub.add_parser("simulate", help="march to a steady state; writes snapshot and time series")
    s.add_argument("--config", required=True)
    s.add_argument("--out")

    s = sub.add_parser("flux", help="flux table A_j(R) of a snapshot against the injection")
    s.add_argument("--config", required=True)
    s.add_argument("--snapshot", required=True)
    s.add_argument("--radii", type=_floats)
    s.add_argument("--out")

    s = sub.add_parser("diagnose", help="tail exponent and localization table of a snapshot")
    s.add_argument("--snapshot", required=True)
    s.add_argument("--config")
    s.add_argument("--radii", type=_floats, help="band radii for the localization table")
    s.add_argument("--out")

    s = sub.add_parser("sweep", help="existence sweep over the (eps, M) grid in the config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")

    s = sub.add_parser("oracle", help="constant-flux integral J(t) along a ray for the kernel (r+rho)^gamma")
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--t", type=_floats, default=[1.0, 2.0, 4.0])
    s.add_argument("--quad-tol", type=float, default=1e-10)
    return p


def _out_dir(args, cfg: RunConfig | None) -> Path | None:
    if getattr(args, "out", None):
        path = Path(args.out)
    elif cfg is not None:
        path = Path(cfg.output.dir)
    else:
        return None
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_timeseries(path: Path, history, d: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "total_number", *(f"mass_{j + 1}" for j in range(d)), "residual", "dt"])
        for row in history:
            w.writerow([repr(float(x)) for x in row])


def _cmd_classify(args) -> int:
    cfg = load_config(args.config)
    env = classify(cfg.kernel)
    out = {
        "family": cfg.kernel.to_dict().get("family"),
        "gamma": env.gamma,
        "p": env.p,
        "c1": env.c1,
        "c2": env.c2,
        "classified": env.classified,
        "exists": bool(existence_predicate(env)) if env.classified else None,
        "note": env.note,
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    kernel = cfg.truncated_kernel()
    out = _out_dir(args, cfg)

    def snap(steps, state):
        write_snapshot(out / f"snapshot_{steps:08d}.txt", state, cfg.M)

    res = evolve_to_steady(ClusterDistribution(cfg.d), cfg.solver, kernel, cfg.source,
                           callback=snap, callback_every=cfg.output.snapshot_every)
    write_snapshot(out / "snapshot.txt", res.state, cfg.M)
    _write_timeseries(out / "timeseries.csv", res.history, cfg.d)
    summary = {
        "converged": res.converged,
        "residual": res.residual,
        "t_final": res.t_final,
        "steps": res.steps,
        "total_number": res.state.total_number(),
        "max_total_number": res.max_total_number,
        "beyond_cutoff_mass": res.beyond_cutoff_mass,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_flux(args) -> int:
    cfg = load_config(args.config)
    state, M = read_snapshot(args.snapshot)
    if state.dim != cfg.d:
        raise ConfigError([f"snapshot has d={state.dim} but the config has d={cfg.d}"])
    kernel = TruncatedKernel(cfg.kernel, TruncationParams(cfg.epsilon, M, max(cfg.L, 1)))
    radii = args.radii or cfg.diagnostics.radii
    report = flux_identity_check(state, kernel, cfg.source, radii=radii, M=M)
    text = report.to_csv()
    sys.stdout.write(text)
    if args.out:
        (_out_dir(args, None) / "flux.csv").write_text(text)
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    cfg = load_config(args.config) if args.config else None
    state, M = read_snapshot(args.snapshot)
    L = max(cfg.L, 1) if cfg else 1
    b = cfg.diagnostics.b if cfg else 0.5
    z_grid = cfg.diagnostics.z_grid if cfg else None
    report: dict = {"M": M}
    try:
        report["exponent_fit"] = diag.fit_tail_exponent(state, b=b, z_grid=z_grid, L=L, M=M).to_dict()
    except diag.DiagnosticError as exc:
        report["exponent_fit"] = {"error": str(exc)}
    if cfg and cfg.diagnostics.theta is not None:
        theta = np.asarray(cfg.diagnostics.theta, dtype=float)
    elif cfg:
        theta = cfg.source.direction()
    else:
        theta = np.full(state.dim, 1.0 / state.dim)
    zeta_band = cfg.diagnostics.zeta_band if cfg else 2.0
    eps_angle = cfg.diagnostics.eps_angle if cfg else 0.1
    radii = args.radii or (cfg.diagnostics.loc_radii if cfg else None)
    if radii is None:
        radii = [r for r in (2.0 ** k for k in range(1, 32)) if zeta_band * r <= M]
    table = []
    for R in radii:
        row = {"R": R}
        try:
            row["ratio"] = diag.localization_ratio(state, R, zeta_band, eps_angle, theta)
        except diag.DiagnosticError as exc:
            row["ratio"] = None
            row["error"] = str(exc)
        try:
            row["isotropic"] = diag.isotropic_ratio(state.dim, R, zeta_band, eps_angle, theta)
        except diag.DiagnosticError:
            row["isotropic"] = None
        table.append(row)
    report["localization"] = {"theta": theta.tolist(), "zeta_band": zeta_band,
                              "eps_angle": eps_angle, "table": table}
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        (_out_dir(args, None) / "diagnose.json").write_text(text + "\n")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sw = cfg.sweep
    if not sw.eps_list or not sw.M_list:
        raise ConfigError(["'sweep' needs non-empty eps_list and M_list"])
    bad = [M for M in sw.M_list if not M > 2 * max(cfg.L, 1)]
    if bad:
        raise ConfigError([f"sweep cutoffs {bad} violate M>2L with L={cfg.L}"])
    res = diag.existence_sweep(cfg.kernel, cfg.source, sw.eps_list, sw.M_list, cfg.solver, R=sw.R)
    out = _out_dir(args, cfg)
    (out / "sweep.csv").write_text(res.to_csv())
    sys.stdout.write(res.to_csv())
    print(json.dumps({"verdict": res.verdict, "R": res.R, "axes": res.axis_verdicts}), file=sys.stderr)
    return EXIT_OK if all(c.converged for c in res.cells) else EXIT_NOT_CONVERGED


def _cmd_oracle(args) -> int:
    if args.d < 1:
        raise ConfigError(["--d must be >= 1"])
    theta = tuple([1.0 / args.d] * args.d)
    ansatz = RayAnsatz(args.gamma, 1.0, theta, args.d)
    # size-sum kernel: homogeneous of degree gamma, identically 1 at gamma = 0
    G = ray_kernel(EnvelopePower(args.gamma, 0.0, 1.0), theta)
    print("t,J,quad_err")
    for t in args.t:
        try:
            val, err = flux_integral(ansatz, G, t, args.quad_tol, return_error=True)
        except NonIntegrableError as exc:
            print(f"{float(t)!r},non-integrable,nan")
            print(f"non-integrable: {exc}", file=sys.stderr)
            continue
        print(f"{float(t)!r},{float(val)!r},{float(err)!r}")
    return EXIT_OK


_COMMANDS = {
    "classify": _cmd_classify,
    "simulate": _cmd_simulate,
    "flux": _cmd_flux,
    "diagnose": _cmd_diagnose,
    "sweep": _cmd_sweep,
    "oracle": _cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, KernelError, LatticeError, OSError, ValueError,
            SolverError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
