"""Command-line entry point ``tdqas``.

Exit codes: 0 on success, 2 for invalid configuration or arguments, 1 for
failures during a run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import labctl

log = logging.getLogger("tdqas")


def _apply_overrides(data: dict, args) -> dict:
    data = dict(data)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.noise is not None:
        data["noise"] = {**data.get("noise", {}), "enabled": args.noise}
    if getattr(args, "mode", None) is not None:
        data["mode"] = args.mode
    return data


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text)
    log.info("wrote %s", target)


def cmd_run(args) -> None:
    cfg = labctl.parse_run_config(_apply_overrides(labctl.load_toml(args.config), args))
    report = labctl.run(cfg)
    _write(args.out or cfg.output, labctl.dump_report(report))


def cmd_hypothesis(args) -> None:
    data = _apply_overrides(labctl.load_toml(args.config), args)
    cfg = labctl.parse_experiment_config(data, "hypothesis")
    records, summary = labctl.run_hypothesis(cfg)
    out = args.out or cfg.output
    _write(out, labctl.hypothesis_csv(records, cfg.task.startswith("vqe")))
    text = json.dumps(summary, indent=2) + "\n"
    if out is None:
        sys.stderr.write(text)
    else:
        _write(str(Path(out).with_suffix(".summary.json")), text)


def cmd_correlation(args) -> None:
    data = _apply_overrides(labctl.load_toml(args.config), args)
    cfg = labctl.parse_experiment_config(data, "correlation")
    results = labctl.run_correlation(cfg)
    out = args.out or cfg.output
    vqe = cfg.task.startswith("vqe")
    summary, spread = {}, {}
    for (single, double), (records, r) in results.items():
        name = f"{single}/{double}"
        summary[name] = r
        spread[name] = float(np.std([x.y_prime for x in records]))
        text = labctl.correlation_csv(records, vqe)
        if out is None:
            sys.stdout.write(f"# instantiation {name} pearson_r={r:.6f}\n{text}")
        else:
            p = Path(out)
            target = p if len(results) == 1 else p.with_name(f"{p.stem}_{single}-{double}{p.suffix}")
            _write(str(target), text)
    # a near-zero spread means the instantiation barely discriminates topologies
    text = json.dumps({"pearson_r": summary, "y_prime_std": spread}, indent=2) + "\n"
    if out is None:
        sys.stderr.write(text)
    else:
        _write(str(Path(out).with_suffix(".summary.json")), text)


def cmd_report(args) -> None:
    reports = []
    for path in args.paths:
        try:
            with open(path) as fh:
                reports.append(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise labctl.ConfigError(f"cannot read report {path}: {exc}") from exc
    try:
        text = labctl.report_summary(reports)
    except ValueError as exc:
        raise labctl.ConfigError(str(exc)) from exc
    _write(args.out, text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdqas", description="Topology-driven quantum architecture search")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_mode=False):
        p.add_argument("config", help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--noise", action=argparse.BooleanOptionalAction, default=None,
                       help="force the noise model on or off")
        p.add_argument("--out", help="output path (default: config 'output' or stdout)")
        if with_mode:
            p.add_argument("--mode", choices=labctl.MODES, help="override the configured mode")

    common(sub.add_parser("run", help="run one search engine"), with_mode=True)
    common(sub.add_parser("hypothesis", help="gate-mutation sensitivity experiment"))
    common(sub.add_parser("correlation", help="topology instantiation correlation experiment"))
    rep = sub.add_parser("report", help="summarize run reports as CSV")
    rep.add_argument("paths", nargs="+", help="report JSON files")
    rep.add_argument("--out", help="CSV output path (default stdout)")
    return parser


COMMANDS = {"run": cmd_run, "hypothesis": cmd_hypothesis, "correlation": cmd_correlation, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except labctl.ConfigError as exc:
        print(f"tdqas: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any run failure as exit 1
        if os.environ.get("TDQAS_DEBUG"):
            raise
        print(f"tdqas: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
