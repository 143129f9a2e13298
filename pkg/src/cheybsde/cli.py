"""Command-line front end: simulate, price, bench and params subcommands.

Flags absent on the command line fall back to CHEYBSDE_* environment
variables (CHEYBSDE_SEED, CHEYBSDE_RUNS, CHEYBSDE_OUT_DIR) before the
config file's own values, which keeps CI overrides out of the configs.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, ENV_PREFIX, bundled_config_names, load_config
from .nn.layers import ArchSpec, init_network
from .runner import run_bench, run_price, run_simulate
from .simulate import RngSpec

__all__ = ["main", "build_parser"]


def _env_default(name: str, cast=str):
    value = os.environ.get(ENV_PREFIX + name)
    return None if value is None else cast(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cheybsde",
        description="Benchmark CLI for swaption pricing in the Cheyette model "
        "(deep-BSDE, Monte-Carlo and Longstaff-Schwartz).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True,
                       help=f"config path or bundled name ({', '.join(bundled_config_names())})")
        p.add_argument("--seed", type=int, default=_env_default("SEED", int),
                       help="override the config seed")
        p.add_argument("--out-dir", default=_env_default("OUT_DIR"),
                       help="directory for artifacts")

    p_sim = sub.add_parser("simulate", help="simulate factor paths and dump them as CSV")
    add_common(p_sim)
    p_sim.add_argument("--paths", type=int, default=16, help="number of paths to dump")

    p_price = sub.add_parser("price", help="price one instrument with one method")
    add_common(p_price)
    p_price.add_argument("--method", choices=["mc", "ls", "bsde-dense", "bsde-tnn"],
                         help="override the config method")
    p_price.add_argument("--degree", type=int, help="override the LS regression degree")
    p_price.add_argument("--runs", type=int, default=_env_default("RUNS", int),
                         help="independent training runs for confidence bands")

    p_bench = sub.add_parser("bench", help="run a config set and write a comparison table")
    p_bench.add_argument("--configs", nargs="+", required=True,
                         help="config paths or bundled names")
    p_bench.add_argument("--seed", type=int, default=_env_default("SEED", int))
    p_bench.add_argument("--runs", type=int, default=_env_default("RUNS", int))
    p_bench.add_argument("--out-dir", default=_env_default("OUT_DIR"), required=False)

    p_params = sub.add_parser("params", help="parameter count of an architecture")
    p_params.add_argument("--arch", required=True, help="architecture spec, e.g. tnn:2x64 or dnn:20x256")
    p_params.add_argument("--chi", type=int, default=2, help="MPO bond dimension")
    p_params.add_argument("--input-width", type=int, default=7,
                          help="network input width (2d+1 for d factors)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "params":
            arch = ArchSpec.parse(args.arch, chi=args.chi, input_width=args.input_width)
            net = init_network(arch, RngSpec(0))
            print(net.param_count())
            return 0

        if args.command == "simulate":
            config = load_config(args.config)
            out_dir = args.out_dir or "."
            target = run_simulate(config, out_dir, m_paths=args.paths, seed=args.seed)
            print(f"wrote {target}")
            return 0

        if args.command == "price":
            config = load_config(args.config)
            result = run_price(
                config,
                out_dir=args.out_dir,
                seed=args.seed,
                runs=args.runs,
                method=args.method,
                degree=args.degree,
            )
            stderr = result.get("stderr")
            band = f" +/- {1.96 * stderr:.6f} (95%)" if stderr is not None and stderr == stderr else ""
            print(f"{result['config']} [{result['method']}] price = {result['price']:.6f}{band}")
            return 0

        if args.command == "bench":
            configs = [load_config(name) for name in args.configs]
            out_dir = args.out_dir or "bench_out"
            table = run_bench(configs, out_dir, seed=args.seed, runs=args.runs)
            print(f"wrote {table}")
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
