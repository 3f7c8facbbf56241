"""Command-line interface.

Subcommands map one-to-one onto the functions in ``runner``:

* ``run``            one Bell estimate with a convergence series
* ``converge``       same, with a denser convergence series by default
* ``sweep-gain``     Bell estimates across pair gains
* ``sweep-eta``      Bell estimates across detector efficiencies
* ``spatial-image``  far-field imaging run with pixel-pair scan
* ``oracle``         closed-form and Gaussian-moment reference values

Exit codes: 0 success, 2 configuration problems, 3 failed spectral
sampling check, 4 statistical estimation failure (e.g. an empty or
sign-degenerate denominator).
"""

from __future__ import annotations

import argparse
import sys
import time

from . import __version__
from .bell import (angle_pairs, chsh_analytic, chsh_critical_gain,
                   clauser_horne_analytic, correlation_analytic, wick_oracle)
from .config import (RunConfig, _parse_pixel, demo_spatial_config,
                     load_config)
from .errors import ConfigError, EstimationError, SamplingCheckError
from .modes import AnalyzerSettings
from .runner import (run_point, spatial_image, sweep_efficiency, sweep_gain)

DEFAULT_GAINS = (0.01, 0.05, 0.1, 0.2, 0.46)
DEFAULT_ETAS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def _parse_angles(text: str) -> AnalyzerSettings:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(
            f"angles must be four comma-separated radians, got {text!r}")
    try:
        t1, t1p, t2, t2p = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"cannot parse angles {text!r}") from exc
    return AnalyzerSettings(t1, t1p, t2, t2p)


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        values = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} list {text!r}") from exc
    if not values:
        raise ConfigError(f"empty {what} list")
    return values


_RUN_KEYS = ("engine", "gain", "eta", "n_trajectories", "master_seed",
             "batch_count", "workers", "snapshots", "out_prefix")
_SPATIAL_KEYS = ("nx", "ny", "dx", "nsteps")


def _add_common_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", metavar="FILE",
                   help="configuration file (flags below override it)")
    p.add_argument("--engine", choices=("mode", "spatial"))
    p.add_argument("--gain", type=float, metavar="G",
                   help="mean photon pairs per mode pair")
    p.add_argument("--eta", type=float, metavar="ETA",
                   help="detector efficiency in [0, 1]")
    p.add_argument("-n", "--trajectories", type=int, dest="n_trajectories",
                   metavar="N", help="number of phase-space trajectories")
    p.add_argument("--seed", type=int, dest="master_seed", metavar="SEED")
    p.add_argument("--batches", type=int, dest="batch_count", metavar="K")
    p.add_argument("--workers", type=int, metavar="W",
                   help="parallel batch workers (outputs do not depend on W)")
    p.add_argument("--snapshots", type=int, metavar="P",
                   help="points in the convergence series")
    p.add_argument("--angles", metavar="T1,T1P,T2,T2P",
                   help="analyzer angles in radians")
    p.add_argument("--out", dest="out_prefix", metavar="PREFIX",
                   help="output file prefix")
    p.add_argument("--out-dir", default=".", metavar="DIR",
                   help="directory for output files (default: .)")
    p.add_argument("--nx", type=int, help="spatial grid columns")
    p.add_argument("--ny", type=int, help="spatial grid rows")
    p.add_argument("--dx", type=float, help="spatial grid pitch")
    p.add_argument("--nsteps", type=int, help="split-step count")
    p.add_argument("--pixel", metavar="IX,IY",
                   help="analyzed far-field pixel, or 'auto'")


def _build_config(args: argparse.Namespace,
                  base: RunConfig | None = None) -> RunConfig:
    if base is None:
        base = load_config(args.config) if args.config else RunConfig()
    elif args.config:
        raise ConfigError("--demo and --config are mutually exclusive")
    overrides = {}
    for key in _RUN_KEYS + _SPATIAL_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "angles", None) is not None:
        overrides["angles"] = _parse_angles(args.angles)
    if getattr(args, "pixel", None) is not None:
        overrides["pixel"] = _parse_pixel(args.pixel)
    return base.with_overrides(**overrides) if overrides else base


def _print_header(config: RunConfig) -> None:
    print(f"engine={config.engine} gain={config.gain:g} eta={config.eta:g} "
          f"n={config.n_trajectories} seed={config.master_seed} "
          f"batches={config.resolved_batch_count()} "
          f"hash={config.config_hash()}")


def _print_result(result, gain: float, eta: float) -> None:
    print(f"CHSH      B = {result.chsh:+.5f} +- {result.chsh_stderr:.5f}"
          f"   (analytic {chsh_analytic(gain):+.5f})")
    print(f"CH ratio  C = {result.ch_ratio:+.5f} +- {result.ch_stderr:.5f}"
          f"   (leading order {clauser_horne_analytic(gain, eta):+.5f})")
    print(f"negative-density trajectory fraction = "
          f"{result.negative_fraction:.4f}")


def _print_paths(paths: dict) -> None:
    for name in sorted(paths):
        print(f"wrote {name}: {paths[name]}")


def cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    _print_header(config)
    t0 = time.perf_counter()
    artifacts = run_point(config, out_dir=args.out_dir)
    elapsed = time.perf_counter() - t0
    _print_result(artifacts.result, config.gain, config.eta)
    _print_paths(artifacts.paths)
    print(f"elapsed: {elapsed:.1f} s")
    return 0


def cmd_converge(args: argparse.Namespace) -> int:
    if args.snapshots is None:
        args.snapshots = 40
    return cmd_run(args)


def cmd_sweep_gain(args: argparse.Namespace) -> int:
    config = _build_config(args)
    gains = (_parse_float_list(args.gains, "gain") if args.gains
             else list(DEFAULT_GAINS))
    _print_header(config)
    t0 = time.perf_counter()
    rows, _, paths = sweep_gain(config, gains, out_dir=args.out_dir)
    elapsed = time.perf_counter() - t0
    for row in rows:
        print(f"gain={row[0]:<8g} B={row[1]:+.4f}+-{row[2]:.4f} "
              f"(analytic {row[3]:+.4f})  C={row[4]:+.4f}+-{row[5]:.4f} "
              f"(analytic {row[6]:+.4f})  neg={row[7]:.4f}")
    _print_paths(paths)
    print(f"elapsed: {elapsed:.1f} s")
    return 0


def cmd_sweep_eta(args: argparse.Namespace) -> int:
    config = _build_config(args)
    etas = (_parse_float_list(args.etas, "eta") if args.etas
            else list(DEFAULT_ETAS))
    _print_header(config)
    t0 = time.perf_counter()
    rows, _, paths = sweep_efficiency(config, etas, out_dir=args.out_dir)
    elapsed = time.perf_counter() - t0
    for row in rows:
        print(f"eta={row[0]:<6g} B={row[1]:+.4f}+-{row[2]:.4f}  "
              f"C={row[3]:+.4f}+-{row[4]:.4f} (analytic {row[5]:+.4f})  "
              f"neg={row[6]:.4f}")
    _print_paths(paths)
    print(f"elapsed: {elapsed:.1f} s")
    return 0


def cmd_spatial_image(args: argparse.Namespace) -> int:
    base = demo_spatial_config() if args.demo else None
    config = _build_config(args, base=base)
    if config.engine != "spatial":
        config = config.with_overrides(engine="spatial")
    _print_header(config)
    t0 = time.perf_counter()
    artifacts = spatial_image(config, out_dir=args.out_dir)
    elapsed = time.perf_counter() - t0
    if artifacts.selection is not None:
        print(f"analyzed pixel pair: {artifacts.selection.first} / "
              f"{artifacts.selection.second}")
    if artifacts.scanned is not None:
        print(f"scanned intersection pair: {artifacts.scanned.first} / "
              f"{artifacts.scanned.second}")
    else:
        print(f"intersection scan: {artifacts.scan_message}")
    if artifacts.result is not None:
        _print_result(artifacts.result, config.gain, config.eta)
    elif artifacts.estimate_message is not None:
        print(f"no Bell estimate at analyzed pixel: "
              f"{artifacts.estimate_message}")
    _print_paths(artifacts.paths)
    print(f"elapsed: {elapsed:.1f} s")
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    config = _build_config(args)
    gain, eta, angles = config.gain, config.eta, config.angles
    print(f"gain={gain:g} eta={eta:g} angles=({angles.theta1:+.6f}, "
          f"{angles.theta1_prime:+.6f}, {angles.theta2:+.6f}, "
          f"{angles.theta2_prime:+.6f})")
    print(f"closed form: chsh(gain) = {chsh_analytic(gain):+.8f}   "
          f"ch(gain, eta) = {clauser_horne_analytic(gain, eta):+.8f}")
    print(f"closed form: chsh boundary B=2 at gain = "
          f"{chsh_critical_gain():.8f}")
    oracle = wick_oracle(gain, eta, angles)
    if not oracle.well_defined:
        print("moment oracle: correlations undefined at zero gain "
              "(denominator vanishes)")
        return 0
    pairs = angle_pairs(angles)
    for label in sorted(oracle.correlations):
        analytic = correlation_analytic(gain, *pairs[label])
        print(f"moment oracle: E_{label} = {oracle.correlations[label]:+.10f}"
              f"   (closed form {analytic:+.10f})")
    print(f"moment oracle: chsh = {oracle.chsh:+.10f}   "
          f"ch = {oracle.ch_ratio:+.10f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wignermc",
        description="Phase-space Monte Carlo Bell-inequality estimator")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single Bell estimate")
    _add_common_options(p_run)
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("converge",
                            help="single estimate with dense convergence series")
    _add_common_options(p_conv)
    p_conv.set_defaults(func=cmd_converge)

    p_gain = sub.add_parser("sweep-gain", help="sweep the pair gain")
    _add_common_options(p_gain)
    p_gain.add_argument("--gains", metavar="G1,G2,...",
                        help=f"gains to sweep (default "
                             f"{','.join(str(g) for g in DEFAULT_GAINS)})")
    p_gain.set_defaults(func=cmd_sweep_gain)

    p_eta = sub.add_parser("sweep-eta", help="sweep the detector efficiency")
    _add_common_options(p_eta)
    p_eta.add_argument("--etas", metavar="E1,E2,...",
                       help=f"efficiencies to sweep (default "
                            f"{','.join(str(e) for e in DEFAULT_ETAS)})")
    p_eta.set_defaults(func=cmd_sweep_eta)

    p_img = sub.add_parser("spatial-image", help="far-field imaging run")
    _add_common_options(p_img)
    p_img.add_argument("--demo", action="store_true",
                       help="start from the two-ring demonstration settings")
    p_img.set_defaults(func=cmd_spatial_image)

    p_oracle = sub.add_parser("oracle",
                              help="print reference values, no sampling")
    _add_common_options(p_oracle)
    p_oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except SamplingCheckError as exc:
        print(f"sampling check failed: {exc}", file=sys.stderr)
        return 3
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
