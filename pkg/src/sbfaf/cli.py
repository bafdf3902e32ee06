"""Command-line entry point: ``sbfaf {solve,sweep,papr,verify}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .scenario import ConfigError, generate_channels, load_config
from .sdr import NumericalFailure


def _bits(nats: float) -> float:
    return nats / ex.LN2


def cmd_solve(args) -> int:
    config = load_config(args.config)
    if not args.per_antenna:
        config = config.replace(per_antenna_budgets=None)
    elif config.per_antenna_budgets is None:
        raise ConfigError("per_antenna_budgets", "--per-antenna given but the config has no budgets")
    channels = generate_channels(config, args.seed)
    d = ex.design(config, channels, args.randomizations, args.seed)
    rates = [_bits(r) for r in d.rates()]
    print(",".join([repr(d.sdr.gamma_star), str(d.sdr.rank)] + [repr(r) for r in rates]))
    return 0


def cmd_sweep(args) -> int:
    spec = ex.load_sweep_spec(args.spec)
    report = ex.run_sweep(spec, workers=args.workers)
    report.write_csv(args.out)
    failed = sum(row.failed_draws for row in report.rows)
    if failed:
        logging.getLogger("sbfaf").warning("%d draw(s) skipped after solver failures", failed)
    return 0


def cmd_papr(args) -> int:
    config = load_config(args.config)
    channels = generate_channels(config, args.seed)
    thresholds, ccdf = ex.papr_ccdf(
        config, channels, args.scheme, args.blocks, block_len=args.block_len, seed=args.seed
    )
    ex.write_ccdf_csv(args.out, thresholds, ccdf)
    return 0


def cmd_verify(args) -> int:
    results = ex.verify_suite(args.seed, num_instances=args.instances)
    ex.write_verification_csv(args.out, results)
    failed = [r.name for r in results if not r.passed]
    for name in failed:
        print(f"FAILED {name}", file=sys.stderr)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbfaf", description="AF relay beamforming: SDR, BF and SBF schemes")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one channel draw and print gamma*, rank and the four rates")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--per-antenna", action="store_true", help="enforce the config's per-antenna budgets")
    p.add_argument("--randomizations", type=int, default=1000)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep and write the rate report CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("papr", help="relay PAPR CCDF for one scheme")
    p.add_argument("--config", required=True)
    p.add_argument("--scheme", choices=[k.value for k in ex.SchemeKind], required=True)
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-len", type=int, default=4800)
    p.set_defaults(func=cmd_papr)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--instances", type=int, default=2)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
