"""Command line entry point: ``sppfem {evolve,converge,k0,frank,distance}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .anisotropy import AnisotropyError, direction, frank_diagram
from .config import ConfigError, load, load_anisotropy, parse_anisotropy
from .diagnostics import convergence_study, iteration_stats, order_fit
from .geometry import CurveError, manifold_distance, read_snapshot, write_snapshot
from .records import write_records
from .scheme import EvolutionError, NewtonError, SchemeError, evolve
from .stabilization import StabilizerError, k0_explicit, k0_numeric
from .svg import polylines_svg

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("sppfem")


def _anisotropy(args):
    if args.aniso and args.config:
        raise ConfigError("give either --aniso or --config, not both")
    if args.aniso:
        return parse_anisotropy(args.aniso)
    if args.config:
        return load_anisotropy(args.config)
    raise ConfigError("an anisotropy is required (--aniso or --config)")


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


def cmd_evolve(args):
    cfg = load(args.config)
    out = Path(args.out) if args.out else cfg.out_dir
    every = cfg.snapshot_every if args.snapshot_every is None else args.snapshot_every
    svg = cfg.svg or args.svg
    out.mkdir(parents=True, exist_ok=True)
    shots = []

    def on_record(rec, state):
        m = rec.step
        if every and (m % every == 0 or m == cfg.n_steps):
            write_snapshot(out / f"snapshot_{m:06d}.txt", state.curve.vertices, state.time)
            shots.append(state.curve.vertices)

    try:
        traj = evolve(
            cfg.curve,
            cfg.scheme,
            cfg.aniso,
            n_steps=cfg.n_steps,
            plateau_stop=cfg.stop_at_plateau,
            on_record=on_record,
        )
    except StabilizerError as exc:
        raise ConfigError(str(exc)) from exc
    finally:
        # keep whatever was produced before a failure
        if svg and shots:
            (out / "snapshots.svg").write_text(polylines_svg(shots))
    if every and traj.stopped_early and traj.records[-1].step % every:
        write_snapshot(out / f"snapshot_{traj.records[-1].step:06d}.txt", traj.final.curve.vertices, traj.final.time)
    write_records(out / "diagnostics.csv", traj.records)
    last = traj.records[-1]
    stats = iteration_stats(traj.records) if len(traj.records) > 1 else None
    med = f"{stats.median:g}" if stats else "n/a"
    print(
        f"steps={last.step} t={last.time:.6g} area_loss_rel={last.area_loss_rel:.3e} "
        f"max_abs_area_loss={max(abs(r.area_loss_rel) for r in traj.records):.3e} "
        f"energy_norm={last.energy_norm:.12g} median_newton_iters={med}"
    )
    return EXIT_OK


def cmd_converge(args):
    aniso = _anisotropy(args)
    h_list = [2.0**-e for e in args.h_exponents]
    ref = {"h_e": 2.0**-8, "tau_e": 2.0**-16} if args.fine_reference else {"h_e": args.h_e, "tau_e": args.tau_e}
    table = convergence_study(aniso, args.t, h_list, ref, stabilizer=args.stabilizer, workers=args.workers)
    with _open_out(args.out) as fh:
        table.to_csv(fh)
    if len(table) >= 3:
        print(f"fitted order {order_fit(table):.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_k0(args):
    if args.resolution < 1:
        raise ConfigError("--resolution must be positive")
    aniso = _anisotropy(args)
    theta = -np.pi + 2.0 * np.pi * np.arange(args.resolution) / args.resolution
    n = direction(theta)
    k0 = k0_numeric(aniso, n)
    ke = k0_explicit(aniso, n)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "k0", "k_explicit", "gap"])
        for i, th in enumerate(theta):
            if ke is None:
                w.writerow([f"{th:.17g}", f"{k0[i]:.17g}", "", ""])
            else:
                w.writerow([f"{th:.17g}", f"{k0[i]:.17g}", f"{ke[i]:.17g}", f"{ke[i] - k0[i]:.17g}"])
    return EXIT_OK


def cmd_frank(args):
    if args.M < 16:
        raise ConfigError(f"-M must be at least 16, got {args.M}")
    aniso = _anisotropy(args)
    pts, convex = frank_diagram(aniso, args.M)
    flag = "convex" if convex else "nonconvex"
    with _open_out(args.out) as fh:
        fh.write(f"M {len(pts)} {flag}\n")
        fh.writelines(f"{x:.17g} {y:.17g}\n" for x, y in pts)
    if args.svg:
        Path(args.svg).write_text(polylines_svg([pts]))
    print(f"{flag} ({aniso.classify()}ly anisotropic)", file=sys.stderr)
    return EXIT_OK


def cmd_distance(args):
    X1, _ = read_snapshot(args.a)
    X2, _ = read_snapshot(args.b)
    print(f"{manifold_distance(X1, X2, method=args.method, resolution=args.resolution):.17g}")
    return EXIT_OK


def _aniso_args(p):
    p.add_argument("--aniso", help="inline record, e.g. 'family=\"m_fold\", m=2, beta=0.3'")
    p.add_argument("--config", help="TOML file with an [anisotropy] table")


def build_parser():
    ap = argparse.ArgumentParser(prog="sppfem", description="Anisotropic surface diffusion of closed curves.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run an evolution from a TOML config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides [output].dir)")
    p.add_argument("--snapshot-every", type=int, help="write a snapshot every K steps")
    p.add_argument("--svg", action="store_true", help="also render snapshots to SVG")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("converge", help="spatial convergence study against a fine reference")
    _aniso_args(p)
    p.add_argument("--t", type=float, default=0.5, help="evaluation time")
    p.add_argument("--h-exponents", type=int, nargs="+", default=[3, 4, 5, 6], help="h = 2^-e for each e")
    p.add_argument("--h-e", type=float, default=2.0**-7)
    p.add_argument("--tau-e", type=float, default=2.0**-14)
    p.add_argument("--fine-reference", action="store_true", help="use h_e = 2^-8, tau_e = 2^-16")
    p.add_argument("--stabilizer", default="auto", choices=["auto", "explicit", "numeric"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="convergence.csv")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("k0", help="tabulate the minimal stabilizing function")
    _aniso_args(p)
    p.add_argument("--resolution", type=int, default=360)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_k0)

    p = sub.add_parser("frank", help="Frank diagram (1/gamma polar plot)")
    _aniso_args(p)
    p.add_argument("-M", type=int, default=512)
    p.add_argument("--out", default="-")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_frank)

    p = sub.add_parser("distance", help="area of the symmetric difference of two snapshot curves")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--method", default="auto", choices=["exact", "raster", "auto"])
    p.add_argument("--resolution", type=int, default=2048)
    p.set_defaults(func=cmd_distance)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, AnisotropyError, CurveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonError, EvolutionError) as exc:
        where = f" at step {exc.step}" if exc.step is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SchemeError, StabilizerError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
