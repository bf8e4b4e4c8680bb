"""Command-line entry points: davies, vanhove and lab."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("spinboson")


def _setup_logging(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


# ------------------------------------------------------------------ davies
def davies_main(argv=None):
    from .davies import (build_generator_direct, build_generator_quadrature, dump_generator,
                         load_generator, spectral_analysis)
    from .model import load_model

    ap = argparse.ArgumentParser(prog="davies", description="Weak-coupling generator tools")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    b = sub.add_parser("build", help="assemble the generator from a model TOML")
    b.add_argument("--model", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--route", choices=["direct", "quadrature"], default="direct")
    s = sub.add_parser("spectrum", help="spectral analysis of a stored generator")
    s.add_argument("generator")
    s.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args(argv)
    _setup_logging(args.verbose)

    if args.cmd == "build":
        model = load_model(args.model)
        gen = build_generator_direct(model) if args.route == "direct" \
            else build_generator_quadrature(model)
        dump_generator(gen, args.out, spectral_analysis(gen))
        log.info("wrote %s", args.out)
        return 0
    gen = load_generator(args.generator)
    rep = spectral_analysis(gen, args.tol)
    out = {"eigenvalues": [[float(z.real), float(z.imag)] for z in rep.eigenvalues],
           "gap": float(rep.gap), "simple_zero": rep.simple_zero,
           "leading": [rep.leading.real, rep.leading.imag],
           "stationary": [[[float(z.real), float(z.imag)] for z in row] for row in rep.stationary]}
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


# ------------------------------------------------------------------ vanhove
def parse_density(text):
    """Density from a model TOML, a two-column CSV table, or 'gamma=2,omega_c=1,...'."""
    from .model import SpectralDensity, load_model
    p = Path(text)
    if p.suffix == ".toml" and p.exists():
        return load_model(p).density
    if p.suffix == ".csv" and p.exists():
        tab = np.loadtxt(p, delimiter=",", ndmin=2)
        return SpectralDensity.tabulated(tab[:, 0], tab[:, 1])
    kw = {}
    for item in text.split(","):
        k, _, v = item.partition("=")
        kw[k.strip()] = float(v)
    return SpectralDensity.analytic(kw.pop("gamma", 1.0), kw.pop("omega_c", 1.0),
                                    kw.pop("amplitude", 1.0), kw.pop("omega_max", None))


def vanhove_main(argv=None):
    from .correlations import BoundaryProfiles
    from .vanhove import VanHoveModel, scan, write_scan_csv

    ap = argparse.ArgumentParser(prog="vanhove", description="Closed forms for the solvable model")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("scan", help="photon number, generating function and Weyl expectation vs t")
    s.add_argument("--density", required=True,
                   help="model TOML, CSV table, or gamma=..,omega_c=..,amplitude=..,omega_max=..")
    s.add_argument("--kappa", type=float, default=0.0)
    s.add_argument("--tmax", type=float, required=True)
    s.add_argument("--n", type=int, default=101, help="number of time points")
    s.add_argument("--lam", type=float, default=1.0)
    s.add_argument("--weyl-amplitude", type=float, default=0.0,
                   help="Weyl profile c sqrt(J) e^{i phase w}; 0 disables the column")
    s.add_argument("--weyl-phase", type=float, default=0.0)
    s.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    _setup_logging(args.verbose)

    dens = parse_density(args.density)
    m = VanHoveModel(dens, args.lam)
    prof = None
    if args.weyl_amplitude:
        prof = BoundaryProfiles.scaled_phi(dens, right=args.weyl_amplitude,
                                           phase_right=args.weyl_phase)
    rows = scan(m, args.kappa, np.linspace(0.0, args.tmax, args.n), prof)
    write_scan_csv(rows, args.out)
    log.info("wrote %d rows to %s", len(rows), args.out)
    return 0


# ------------------------------------------------------------------ lab
def lab_main(argv=None):
    from .lab import ExperimentConfig, run_experiment

    ap = argparse.ArgumentParser(prog="lab", description="Run configured experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (defaults to the config's)")
    args = ap.parse_args(argv)
    _setup_logging(args.verbose)

    cfg = ExperimentConfig.load(args.config)
    out = args.out or str(Path(cfg.base_dir) / cfg.output)
    table = run_experiment(cfg, out)
    n_bad = sum(r["flagged"] for r in table.rows)
    print(f"{cfg.experiment}: {len(table.rows)} rows, {n_bad} flagged -> {out}")
    return 0 if table.all_valid else 1


if __name__ == "__main__":
    sys.exit(lab_main())
