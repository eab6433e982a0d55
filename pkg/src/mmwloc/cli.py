"""Command-line entry point: ``bounds``, ``estimate`` and ``montecarlo``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import MmwlocError
from .harness import CampaignConfig, estimate_once, run_bounds, run_montecarlo


def _load(args) -> CampaignConfig:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.profile:
        d["profile"] = args.profile
    return CampaignConfig.from_dict(d)


def _bounds(args) -> int:
    cc = _load(args)
    paths = run_bounds(cc).write(args.out, "bounds")
    print("\n".join(str(p) for p in paths))
    return 0


def _estimate(args) -> int:
    cc = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = estimate_once(cc, args.seed, args.snr)
    path = out / "estimate.json"
    path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(path)
    return 0


def _montecarlo(args) -> int:
    cc = _load(args)
    paths = run_montecarlo(cc, args.trials).write(args.out, "montecarlo")
    print("\n".join(str(p) for p in paths))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmwloc",
                                     description="mm-wave MIMO position and rotation bounds and estimation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="campaign JSON file (defaults apply when omitted)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--profile", choices=("desk", "paper"),
                       help="array/OFDM size profile, overrides the config")

    p = sub.add_parser("bounds", help="PEB/REB/CRB tables")
    common(p)
    p.set_defaults(func=_bounds)

    p = sub.add_parser("estimate", help="single estimation run")
    common(p)
    p.add_argument("--seed", type=int, required=True, help="noise seed (non-negative integer)")
    p.add_argument("--snr", type=float, help="SNR in dB (default: last grid point)")
    p.set_defaults(func=_estimate)

    p = sub.add_parser("montecarlo", help="Monte Carlo RMSE versus bounds")
    common(p)
    p.add_argument("--trials", type=int, help="trials per SNR (overrides the config)")
    p.set_defaults(func=_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (MmwlocError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
