"""Command-line interface.

Experiment subcommands run in-process by default; with ``--server URL``
they become thin clients that POST the resolved config to a running
service and write back the returned CSV.  ``serve`` starts the service.

Exit codes: 0 success, 1 config error, 2 oracle-check assertion failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import (
    EXPERIMENT_KINDS,
    ConfigError,
    config_from_dict,
    load_config,
    run_experiment,
)

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coprime-mmse",
        description="Coprime-array autocorrelation combining experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--trials", type=int, help="trial count (overrides config)")
        p.add_argument("--out", help="output CSV path (default: stdout)")
        p.add_argument("--server", help="base URL of a running service to delegate to")
        p.add_argument("--m", type=int, help="coprime pair member m")
        p.add_argument("--n", type=int, help="coprime pair member n")
        p.add_argument("--k", type=int, help="source count")
        p.add_argument("--q", type=int, help="sample support")
        p.add_argument("--q-list", help="comma-separated sample supports")
        p.add_argument("--snr-db", type=float, help="per-source SNR in dB")
        p.add_argument("--sigma2-db", type=float, help="noise power in dB")
        p.add_argument("--prior", help='prior as JSON, e.g. \'{"kind":"uniform","a":-1.57,"b":1.57}\'')
        p.add_argument("--combiners", help="comma-separated combiner kinds")
        p.add_argument("--power-mode", help="oracle | ratios | estimated")
        p.add_argument("--grid-points", type=int, help="MUSIC search grid size")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    return parser


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "m": args.m,
        "n": args.n,
        "k": args.k,
        "q": args.q,
        "snr_db": args.snr_db,
        "sigma2_db": args.sigma2_db,
        "power_mode": args.power_mode,
        "grid_points": args.grid_points,
    }
    if args.q_list is not None:
        overrides["q_list"] = [int(tok) for tok in args.q_list.split(",") if tok]
    if args.combiners is not None:
        overrides["combiners"] = [tok for tok in args.combiners.split(",") if tok]
    if args.prior is not None:
        try:
            overrides["prior"] = json.loads(args.prior)
        except json.JSONDecodeError as exc:
            raise ConfigError("prior", f"invalid JSON: {exc.msg}") from None
    return overrides


def _resolve_config(args: argparse.Namespace):
    overrides = _collect_overrides(args)
    if args.config:
        return load_config(args.config, overrides)
    return config_from_dict({k: v for k, v in overrides.items() if v is not None})


def _run_remote(server: str, kind: str, cfg) -> tuple[str, bool]:
    import httpx

    url = server.rstrip("/") + "/experiments/run"
    try:
        response = httpx.post(
            url, json={"kind": kind, "config": cfg.to_dict()}, timeout=600.0
        )
    except httpx.HTTPError as exc:
        raise ConfigError("<server>", f"request to {url} failed: {exc}") from None
    if response.status_code != 200:
        raise ConfigError("<server>", f"{response.status_code}: {response.text}")
    return response.text, response.headers.get("x-experiment-pass") == "true"


def _write_output(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    try:
        cfg = _resolve_config(args)
        if args.server:
            csv, ok = _run_remote(args.server, args.command, cfg)
        else:
            csv, ok = run_experiment(args.command, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_output(csv, args.out)
    if args.command == "oracle-check" and not ok:
        print("oracle-check: FAILED", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
