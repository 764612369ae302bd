"""Command-line front end (``python -m nfpassive`` or ``nfpassive``).

Exit codes: 0 success, 1 configuration error, 2 runtime or numeric error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as nio
from .analysis import GroundTruthMask, MetricsReport, score_image
from .combine import CombinedImage
from .scenarios import ConfigError, PipelineError, config_to_dict, parse_config, preset, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("nfpassive")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _index_list(text: str) -> tuple[int, ...]:
    """Parse ``"1,3,5"`` or ``"1-4"`` (1-based, inclusive ranges)."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad index list {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"indices are 1-based and non-empty: {text!r}")
    return tuple(sorted(set(out)))


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("coherent", "incoherent", "both"))
    p.add_argument("--tx-subset", type=_index_list, metavar="LIST",
                   help="1-based transmitter indices, e.g. 1,4 or 2-5")
    p.add_argument("--freq-subset", type=_index_list, metavar="LIST",
                   help="1-based frequency indices (uniformly spaced)")
    p.add_argument("--threads", type=int, metavar="N")
    p.add_argument("--out", type=Path, metavar="DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nfpassive", description="Near-field multi-transmitter passive imaging")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario file end to end")
    run.add_argument("config", type=Path)
    _pipeline_flags(run)

    pre = sub.add_parser("preset", help="run a built-in scenario or print its configuration")
    pre.add_argument("name", choices=("pyramid", "dihedral", "pointcal"))
    pre.add_argument("--fast", action="store_true", help="51 x 51 plane, half the frequencies")
    pre.add_argument("--emit-config", action="store_true", help="print the JSON configuration and exit")
    _pipeline_flags(pre)

    met = sub.add_parser("metrics", help="score an exported volume against a scenario's geometry")
    met.add_argument("volume", type=Path, help="volume base path (.raw/.hdr)")
    met.add_argument("truth", type=Path, help="scenario file describing the true geometry")
    met.add_argument("--threshold-db", type=float, default=-10.0)
    return parser


def _apply_flags(cfg, args):
    kw = {}
    if args.mode:
        kw["mode"] = args.mode
    if args.tx_subset:
        bad = [n for n in args.tx_subset if n > len(cfg.txs)]
        if bad:
            raise ConfigError(f"--tx-subset: transmitter {bad[0]} does not exist (1..{len(cfg.txs)})")
        kw["tx_subset"] = tuple(n - 1 for n in args.tx_subset)
    if args.freq_subset:
        fs = tuple(n - 1 for n in args.freq_subset)
        try:
            cfg.grid.subset(fs)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"--freq-subset: {exc}") from exc
        kw["freq_subset"] = fs
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        kw["threads"] = args.threads
    return cfg.with_options(**kw) if kw else cfg


def _print_reports(reports) -> None:
    print(",".join(MetricsReport.COLUMNS))
    for r in reports:
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in r.row()))


def _metrics(args) -> int:
    cfg = parse_config(args.truth)
    data, volume, hdr = nio.read_volume(args.volume)
    image = CombinedImage.from_intensity(data.astype(float), volume, [], hdr.get("provenance", "file"))
    truth = GroundTruthMask.from_scene(cfg.scene, volume, cfg.options.truth_dilation, cfg.options.ghost_radius)
    _print_reports([score_image(image, cfg.scene, args.volume.name, truth, args.threshold_db)])
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "metrics":
            return _metrics(args)
        if args.command == "run":
            cfg = parse_config(args.config)
        else:
            cfg = preset(args.name, fast=args.fast)
            if args.emit_config:
                print(json.dumps(config_to_dict(cfg), indent=2))
                return EXIT_OK
        cfg = _apply_flags(cfg, args)
        result = run_pipeline(cfg, args.out)
        _print_reports(result.reports)
        print(f"wrote {len(result.manifest)} artifacts to {result.out_dir}", file=sys.stderr)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        code = EXIT_IO if isinstance(exc.cause, OSError) else EXIT_RUNTIME
        print(f"error: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ArithmeticError, IndexError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
