"""
simulator.cli
chord-lab run <scenario> [--out DIR] [--methods a,b] [--dt X] [--dispatch]
chord-lab describe <scenario>
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from simulator import logger
from simulator.config import EXIT_OK
from simulator.errors import ChordLabError, exit_code_for
from simulator.scenario import load_scenario
from simulator.storage import read_report_from_json
from simulator.workflow import describe, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chord-lab",
        description="Phase-space simulator for Markovian open quantum systems (Wigner / chord representations).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_cmd = sub.add_parser("run", help="evolve a scenario with the requested methods and write grids + report.json")
    run_cmd.add_argument("scenario", help="scenario JSON file")
    run_cmd.add_argument("--out", default=None, help="output directory (default: CHORD_LAB_OUTPUT_ROOT/<output_dir>)")
    run_cmd.add_argument("--methods", default=None, help="comma separated subset of exact,smallchord,oracle")
    run_cmd.add_argument("--dt", type=float, default=None, help="integrator step")
    run_cmd.add_argument("--dispatch", action="store_true", help="fan the methods out as a Celery chord")

    describe_cmd = sub.add_parser("describe", help="print derived quantities of a scenario")
    describe_cmd.add_argument("scenario", help="scenario JSON file")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """[輔助函式] CLI 旗標 → scenario 欄位"""
    methods: Optional[List[str]] = None
    if getattr(args, "methods", None):
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    return {
        "output_dir": str(Path(args.out).resolve()) if getattr(args, "out", None) else None,
        "methods": methods,
        "dt": getattr(args, "dt", None),
    }


def summarize_report(out: Path) -> List[str]:
    """[輔助函式] report.json 的每個時間點、每對方法一行"""
    report = read_report_from_json(out / "report.json")
    lines = []
    for row in report["per_time"]:
        for pair, metrics in row["pairs"].items():
            lines.append(f"t={row['t']:g} {pair}: max-abs {metrics['max_abs']:.3e}, L2 {metrics['l2']:.3e}")
    t_dec = report["t_dec"]["t_dec"]
    lines.append(f"t_dec at centroid: {t_dec}")
    return lines


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario, _overrides(args))
        if args.command == "describe":
            print(describe(scenario))
            return EXIT_OK
        out = run(scenario, dispatch=args.dispatch)
        print(str(out))
        if not args.dispatch:
            for line in summarize_report(out):
                print(line)
        return EXIT_OK
    except ChordLabError as e:
        logger.exception("❌ %s 失敗（%s）：%s", args.command, type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        logger.exception("❌ %s 發生未預期的錯誤：%s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
