"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import CASES, PipelineConfig
from .errors import NarxError


def _load(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config)
    fill = getattr(args, "fill", None)
    if fill:
        config = dataclasses.replace(config, data=dataclasses.replace(config.data, fill=fill))
    return config


def _identify(args) -> int:
    from .pipeline import run_case_study

    config = _load(args)
    result = run_case_study(config, args.case, args.out)
    print(f"{args.case}: {len(result['model'])} terms, "
          f"R2 train {result['r2_train']:.4f}, test {result['r2_test']:.4f} -> {result['out']}")
    return 0


def _simulate(args) -> int:
    from .pipeline import simulate_seir_to_csv

    config = _load(args)
    out = Path(args.out) if args.out else config.resolve(config.output_dir) / "seir.csv"
    print(simulate_seir_to_csv(config, out))
    return 0


def _derive(args) -> int:
    from .pipeline import derive_rn_to_csv

    config = _load(args)
    out = Path(args.out) if args.out else config.resolve(config.output_dir) / "rn.csv"
    print(derive_rn_to_csv(config, out))
    return 0


def _verify(args) -> int:
    from .pipeline import verification_report

    report, ok = verification_report(args.seed)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report, encoding="utf-8")
    sys.stdout.write(report)
    return 0 if ok else 1


def _init_config(args) -> int:
    text = PipelineConfig().to_toml()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="narxfrols", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify", help="run one case study and write its reports")
    p.add_argument("--config", required=True)
    p.add_argument("--fill", choices=("none", "forward"), default=None,
                   help="missing-date policy (overrides data.fill)")
    p.add_argument("--case", required=True, choices=CASES)
    p.add_argument("--out", default=None, help="output directory (default: config output.directory)")
    p.set_defaults(func=_identify)

    p = sub.add_parser("simulate-seir", help="integrate the SEIR-D model and write a CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_simulate)

    p = sub.add_parser("derive-rn", help="derive beta, r and RN from case/death data")
    p.add_argument("--config", required=True)
    p.add_argument("--fill", choices=("none", "forward"), default=None,
                   help="missing-date policy (overrides data.fill)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_derive)

    p = sub.add_parser("verify", help="run the synthetic verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_verify)

    p = sub.add_parser("init-config", help="print the default configuration")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_init_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NarxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
