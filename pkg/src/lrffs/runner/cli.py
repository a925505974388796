"""Command-line entry point: ``lrffs run|validate|serve|client|oracle``."""

from __future__ import annotations

import argparse
import json
import sys

from ..core import CategoryRegistry, DataError, load_csv_dataset


def _cmd_run(args) -> int:
    from .config import load_config
    from .experiment import run_experiment

    cfg = load_config(args.config)
    if args.T is not None:
        cfg = cfg.model_copy(update={"T": args.T})
    report = run_experiment(cfg, args.output)
    print(f"wrote {report.output_dir}/summary.csv ({len(report.runs)} run records)")
    for row in report.summary:
        print(
            f"  {row['method']:<28} sweep={row['sweep_value']!s:<6} SSR={row['SSR']:.3f} "
            f"PSR={row['PSR']:.3f} FDR={row['FDR']:.3f} Size={row['Size']:.1f} wRank={row['wRank']:.1f}"
        )
    return 0


def _cmd_validate(args) -> int:
    from .config import load_config

    cfg = load_config(args.config)
    specs = ", ".join(s.label for s in cfg.method_specs())
    print(f"{args.config}: ok ({cfg.name}; methods {specs}; T={cfg.T})")
    return 0


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise DataError(f"address must look like host:port, got {addr!r}")
    return host, int(port)


def _cmd_serve(args) -> int:
    import uvicorn

    from ..service.app import create_app

    host, port = _split_addr(args.listen)
    uvicorn.run(create_app(), host=host, port=port, log_level=args.log_level)
    return 0


def _cmd_client(args) -> int:
    from ..methods import make_summary, parse_method, required_sections, split_methods
    from .transport import SocketTransport

    transport = SocketTransport(args.connect)
    try:
        methods = [parse_method(m) for m in split_methods(args.methods)]
        if args.shard:
            registry = CategoryRegistry(tuple(args.labels.split(","))) if args.labels else None
            shard, registry = load_csv_dataset(
                args.shard, args.label_column, args.delimiter, registry, args.client_id
            )
            summary, _ = make_summary(shard, required_sections(methods))
            size = transport.upload(args.round, summary)
            print(f"uploaded {shard.client_id} (n={shard.n}, p={shard.p}, R={shard.R}): {size} bytes")
        if args.aggregate:
            body = transport.aggregate(
                args.round, [m.label for m in methods], args.expected_clients
            )
            json.dump(body, sys.stdout, indent=2)
            print()
        if not args.shard and not args.aggregate:
            raise DataError("nothing to do: give --shard and/or --aggregate")
    finally:
        transport.close()
    return 0


def _cmd_oracle(args) -> int:
    from ..oracles import CASES, run_case

    if args.case == "list":
        for name, usage in CASES.items():
            print(f"{name}: {usage}")
        return 0
    kv = {}
    for item in args.params:
        key, sep, val = item.partition("=")
        if not sep:
            raise DataError(f"oracle arguments look like key=value, got {item!r}")
        kv[key] = val
    try:
        out = run_case(args.case, kv)
    except KeyError as exc:
        raise DataError(str(exc).strip("'\"")) from None
    for key, val in out.items():
        print(f"{key} = {val!r}" if not isinstance(val, float) else f"{key} = {val:.17g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrffs", description="Federated feature screening under label shift")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--output", help="output directory (overrides the config)")
    p.add_argument("--T", type=int, help="override the number of repetitions")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("serve", help="run the aggregation server")
    p.add_argument("--listen", default="127.0.0.1:8750", help="host:port")
    p.add_argument("--log-level", default="info")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("client", help="upload one shard's summary and/or request aggregation")
    p.add_argument("--connect", required=True, help="server host:port")
    p.add_argument("--shard", help="client CSV file")
    p.add_argument("--label-column", default="label")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--labels", help="comma-separated category labels shared by all clients")
    p.add_argument("--client-id")
    p.add_argument("--round", default="r0")
    p.add_argument("--methods", default="lrffs", help="comma-separated method names")
    p.add_argument("--aggregate", action="store_true", help="ask the server for utilities")
    p.add_argument("--expected-clients", type=int)
    p.set_defaults(func=_cmd_client)

    p = sub.add_parser("oracle", help="evaluate a brute-force reference case ('list' to show cases)")
    p.add_argument("case")
    p.add_argument("params", nargs="*", help="key=value arguments")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # network failures and the like
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
