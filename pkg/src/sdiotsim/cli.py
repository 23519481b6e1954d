"""Command-line front end: ``sdiotsim run|compare|validate <scenario>``.

Exit codes: 0 success, 1 usage error, 2 scenario error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import InvariantViolation, ScenarioError, SimError, TopologyError
from .runner import AXES, compare, run_scenario
from .scenario import parse_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCENARIO = 2
EXIT_INVARIANT = 3

log = logging.getLogger("sdiotsim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> list[int]:
    """``"10"`` -> seeds 0..9, ``"3,5,8"`` -> those seeds, ``"4-7"`` -> 4..7."""
    text = text.strip()
    try:
        if "," in text:
            return [int(x) for x in text.split(",") if x.strip()]
        if "-" in text[1:]:
            lo, hi = text.split("-", 1)
            return list(range(int(lo), int(hi) + 1))
        count = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if count < 0:
        raise argparse.ArgumentTypeError("seed count must be non-negative")
    return list(range(count))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdiotsim", description="Two-layer SD-IoT control plane simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("scenario", help="scenario file or bundled scenario name")
        sp.add_argument("--seeds", type=parse_seeds, default=None, help="count, list (1,2,3) or range (0-9)")
        sp.add_argument("--out-dir", default=None, help="output directory (env SDIOTSIM_OUT_DIR)")
        sp.add_argument("--format", choices=["csv"], default="csv")

    r = sub.add_parser("run", help="run all replications of a scenario")
    common(r)
    r.add_argument("--dump-trace", action="store_true", help="write the full event trace per replication")
    r.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("compare", help="paired-seed comparison along one axis")
    common(c)
    c.add_argument("--axis", required=True, choices=AXES)

    v = sub.add_parser("validate", help="parse and validate a scenario")
    v.add_argument("scenario")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = parse_scenario(args.scenario)
        for w in cfg.warnings:
            log.warning(w)
        if args.command == "validate":
            topo = cfg.build_topology()
            print(f"{cfg.name}: ok ({len(cfg.topology['main_controllers'])} main, {topo.n} base, "
                  f"{topo.m} switches, algorithms {'/'.join(cfg.algorithms)}, "
                  f"balancer {'on' if cfg.balancer.enabled else 'off'})")
            return EXIT_OK
        if args.command == "run":
            report = run_scenario(cfg, seeds=args.seeds, out_dir=args.out_dir,
                                  dump_trace=args.dump_trace or None, workers=args.workers)
            print(report.text())
            print(f"wrote {len(report.files)} files under {report.out_dir}")
            return EXIT_OK
        report = compare(cfg, args.axis, seeds=args.seeds, out_dir=args.out_dir)
        print(report.text())
        print(f"wrote comparison under {report.out_dir}")
        return EXIT_OK
    except InvariantViolation as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    except (ScenarioError, TopologyError) as exc:
        log.error("scenario error: %s", exc)
        return EXIT_SCENARIO
    except SimError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
