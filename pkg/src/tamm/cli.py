"""Command line front end.

Subcommands: ssh (shuffled-summation reproducibility), ai (accumulator
sweep over a fixture network), gemm (multiply matrix files), info
(resolved configuration), gateway-build (compile the C gateway used by
foreign-language hosts).

Reports are CSV by default, JSON when the output path ends in .json.
Unless suppressed, a figure is rendered next to the report with the
same stem and a .png suffix.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import experiments
from .accumulator import AccumulatorSpec, parse_acc, required_ovf, width
from .buffers import read_matrix, write_matrix
from .fdp import DotProductConfig
from .formats import make_format
from .gemm import KernelConfig, gemm, load_config_file, query_config


def _ints_csv(text: str) -> list:
    return [int(part) for part in text.split(",") if part.strip()]


def _report_format(path) -> str:
    return "json" if str(path).endswith(".json") else "csv"


def _emit_report(rows, out, no_figure: bool, kind: str) -> None:
    experiments.report_emit(rows, out, _report_format(out))
    print(f"wrote {out}")
    if not no_figure and rows:
        from . import plots

        fig_path = plots.figure_path_for(out)
        render = plots.ssh_figure if kind == "ssh" else plots.ai_figure
        render(rows, fig_path)
        print(f"wrote {fig_path}")


def _resolved_config(args) -> KernelConfig:
    cfg = load_config_file(args.config) if getattr(args, "config", None) else query_config()
    if getattr(args, "format", None):
        dot = DotProductConfig(make_format(args.format), cfg.dot_cfg.accumulator)
        cfg = dataclasses.replace(cfg, dot_cfg=dot)
    if getattr(args, "acc", None):
        dot = DotProductConfig(cfg.dot_cfg.operand_format, parse_acc(args.acc))
        cfg = dataclasses.replace(cfg, dot_cfg=dot)
    if getattr(args, "array", None):
        r, _, c = args.array.lower().partition("x")
        cfg = dataclasses.replace(cfg, array_rows=int(r), array_cols=int(c))
    if getattr(args, "backend", None):
        cfg = dataclasses.replace(cfg, backend=args.backend)
    return cfg


def cmd_ssh(args) -> int:
    units = experiments.parse_units(args.units)
    rows = experiments.ssh_experiment(
        _ints_csv(args.sizes), shuffles=args.shuffles, units=units, seed=args.seed)
    for row in rows:
        print("  ".join(f"{k}={row[k]}" for k in experiments.SSH_FIELDS))
    _emit_report(rows, args.out, args.no_figure, "ssh")
    return 0


def _parse_sweep(text: str):
    axis, sep, tail = text.partition("=")
    if not sep or not tail:
        raise ValueError(f"sweep must look like lsb=-48,-38,... got {text!r}")
    return axis.strip().lower(), _ints_csv(tail)


def _parse_acc_pattern(text: str):
    """'9:6:*' -> ({'ovf': 9, 'msb': 6}, 'lsb'). No star -> (all three, None)."""
    body = text[4:] if text.lower().startswith("acc:") else text
    parts = [p.strip() for p in body.split(":")]
    if len(parts) != 3:
        raise ValueError(f"accumulator must be <ovf>:<msb>:<lsb>, got {text!r}")
    names = ("ovf", "msb", "lsb")
    fixed = {}
    star = None
    for name, part in zip(names, parts):
        if part == "*":
            if star is not None:
                raise ValueError("only one accumulator field may be swept")
            star = name
        else:
            fixed[name] = int(part)
    return fixed, star


def cmd_ai(args) -> int:
    fmt = make_format(args.format)
    fixed, star = _parse_acc_pattern(args.acc)
    if args.sweep:
        axis, values = _parse_sweep(args.sweep)
        if star is not None and star != axis:
            raise ValueError(f"--acc sweeps {star!r} but --sweep names {axis!r}")
        base = AccumulatorSpec(**{**{axis: values[0]}, **fixed})
        specs = experiments.sweep_enumerate(axis, base, values)
    else:
        if star is not None:
            raise ValueError(f"--acc leaves {star!r} open but no --sweep was given")
        specs = [AccumulatorSpec(**fixed)]
    base_cfg = load_config_file(args.config) if args.config else query_config()
    rows = experiments.ai_proxy_experiment(
        args.model, args.data, [(fmt, spec) for spec in specs],
        base_config=base_cfg, workers=args.workers)
    for row in rows:
        print("  ".join(f"{k}={row[k]}" for k in experiments.AI_FIELDS))
    _emit_report(rows, args.out, args.no_figure, "ai")
    return 0


def cmd_gemm(args) -> int:
    cfg = _resolved_config(args)
    a = read_matrix(args.a)
    b = read_matrix(args.b)
    c = read_matrix(args.c) if args.c else None
    out = gemm(a, b, c, alpha=args.alpha, beta=args.beta, cfg=cfg,
               workers=args.workers)
    write_matrix(args.out, out)
    print(f"wrote {args.out}  [{out.rows}x{out.cols} {out.fmt.descriptor}, "
          f"kernel {cfg.descriptor}]")
    return 0


def cmd_info(args) -> int:
    cfg = _resolved_config(args)
    fmt = cfg.dot_cfg.operand_format
    acc = cfg.dot_cfg.accumulator
    print(f"kernel    {cfg.descriptor}")
    print(f"operand   {fmt.descriptor}: {fmt.total_bits} bits, "
          f"emax {fmt.emax}, emin {fmt.emin}")
    print(f"scratch   {acc.descriptor}: {width(acc)} bits wide")
    if args.terms:
        need = required_ovf(args.terms)
        print(f"terms     {args.terms} summands want ovf >= {need} "
              f"(configured {acc.ovf})")
    print(f"array     {cfg.array_rows}x{cfg.array_cols}, backend {cfg.backend}")
    return 0


def cmd_gateway_build(args) -> int:
    from . import gateway

    path = gateway.build_gateway(args.out)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tamm", description="bit-exact numerically tailored matrix kernels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ssh", help="shuffled-summation reproducibility runs")
    p.add_argument("--sizes", default="512,8192,153600",
                   help="comma list of vector sizes")
    p.add_argument("--shuffles", type=int, default=1000)
    p.add_argument("--units", default="fma64,fma128,fdp:30:30:-30",
                   help="comma list: fma64, fma128, fdp:<ovf>:<msb>:<lsb>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="ssh_report.csv")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_ssh)

    p = sub.add_parser("ai", help="accuracy sweep over scratchpad shapes")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="IDX image file")
    p.add_argument("--format", default="ieee:8:23")
    p.add_argument("--acc", default="9:6:-48",
                   help="ovf:msb:lsb, * marks the swept field")
    p.add_argument("--sweep", default=None, help="axis=v1,v2,... e.g. lsb=-48,-38")
    p.add_argument("--config", default=None, help="kernel config file")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="ai_sweep.csv")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_ai)

    p = sub.add_parser("gemm", help="multiply two matrix files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--c", default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--format", default=None, help="override operand format")
    p.add_argument("--acc", default=None, help="override accumulator")
    p.add_argument("--array", default=None, help="override RxC array shape")
    p.add_argument("--backend", default=None, choices=["functional", "systolic"])
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_gemm)

    p = sub.add_parser("info", help="show the resolved kernel configuration")
    p.add_argument("--config", default=None)
    p.add_argument("--format", default=None)
    p.add_argument("--acc", default=None)
    p.add_argument("--array", default=None)
    p.add_argument("--backend", default=None, choices=["functional", "systolic"])
    p.add_argument("--terms", type=int, default=None,
                   help="report the overflow margin needed for N summands")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("gateway-build", help="compile the C host gateway")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_gateway_build)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"tamm: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
