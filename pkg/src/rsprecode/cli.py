"""Command-line interface: `rs-precode run` and `rs-precode selftest`."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import __version__


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rs-precode",
        description="Rate-splitting precoder design experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment config or preset")
    runp.add_argument("config", nargs="?", help="YAML config file")
    runp.add_argument("--preset", help="named preset (fig3, fig4-disjoint, ...)")
    runp.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    runp.add_argument("--out", default="results", help="output directory")
    runp.add_argument("--seed", type=int, help="override the config seed")
    runp.add_argument("--trials", type=int, help="override the trial count")
    runp.add_argument(
        "--compare-regularization",
        action="store_true",
        help="also sweep with the CSIT regularizer disabled and report gains",
    )

    sub.add_parser("selftest", help="run the fast acceptance subset")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, os.environ.get("RS_PRECODE_LOG", "WARNING").upper(), logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    if args.command == "selftest":
        from . import selftest

        return 0 if selftest.run() else 1

    from . import harness, presets

    if args.preset:
        cfg = presets.get(args.preset)
    elif args.config:
        cfg = harness.load_config(args.config)
    else:
        parser.error("provide a config file or --preset NAME")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)

    if args.compare_regularization:
        table = harness.compare_regularization(cfg, jobs=args.jobs, out_dir=args.out)
        for row in table:
            print(
                f"sigma2={row['sigma2']:g} scheme={row['scheme']}: "
                f"reg {row['mean_regularized']:.3f} vs plain {row['mean_unregularized']:.3f} "
                f"(ratio {row['ratio']:.2f}, n={row['n']})"
            )
        return 0

    records, summary = harness.run_experiment(cfg, jobs=args.jobs, out_dir=args.out)
    for (scheme, p_db, s2), stats in summary.items():
        print(
            f"{scheme:>16} P={p_db:5.1f} dB sigma2={s2:.2f}: "
            f"{stats['mean']:8.4f} +/- {stats['std']:.4f} bits ({stats['n']} trials)"
        )
    bad = [r for r in records if r.status != "ok"]
    if bad:
        print(f"{len(bad)} rows not ok ({sorted(set(r.status for r in bad))})", file=sys.stderr)
    return 0 if not bad else 1


if __name__ == "__main__":
    raise SystemExit(main())
