"""Command-line client for the experiment service.

The CLI owns all file I/O and delegates computation to the HTTP service:
by default requests go to an in-process instance of the app (no server
needed); pass --server to target a running one. Exit codes: 0 success,
1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

VALIDATION_EXIT = 1
RUNTIME_EXIT = 2


class CliError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _call_service(method: str, path: str, payload: dict, server: str | None) -> dict:
    async def _go() -> httpx.Response:
        if server is None:
            from .service.app import app

            transport = httpx.ASGITransport(app=app, raise_app_exceptions=False)
            async with httpx.AsyncClient(transport=transport, base_url="http://elastiq") as client:
                return await client.request(method, path, json=payload, timeout=None)
        async with httpx.AsyncClient(base_url=server) as client:
            return await client.request(method, path, json=payload, timeout=None)

    try:
        response = asyncio.run(_go())
    except httpx.HTTPError as exc:
        raise CliError(f"service request failed: {exc}", RUNTIME_EXIT) from exc
    if response.status_code in (400, 422):
        raise CliError(f"validation error: {response.text}", VALIDATION_EXIT)
    if response.status_code >= 500:
        raise CliError(f"service error {response.status_code}: {response.text}", RUNTIME_EXIT)
    return response.json()


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", VALIDATION_EXIT) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid JSON in config {path}: {exc}", VALIDATION_EXIT) from exc


def _read_text(path: str, what: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc}", VALIDATION_EXIT) from exc


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_generate_trace(args) -> int:
    spec: dict = {"kind": args.kind, "duration_s": args.duration_s, "interval_s": args.interval_s}
    if args.kind == "irregular":
        spec.update(
            u_min=args.u_min,
            u_max=args.u_max,
            jump_prob=args.jump_prob,
            jump_scale=args.jump_scale,
            step_frac=args.step_frac,
        )
    else:
        spec.update(
            u_peak=args.u_peak,
            u_trough=args.u_trough,
            peak_hour=args.peak_hour,
            noise_frac=args.noise_frac,
        )
    result = _call_service(
        "POST", "/traces/generate", {"spec": spec, "seed": args.seed}, args.server
    )
    _write_text(Path(args.out), result["csv"])
    print(f"wrote {result['n_samples']} samples to {args.out}")
    return 0


def cmd_run(args) -> int:
    payload: dict = {
        "config": _read_config(args.config),
        "policy": args.policy,
    }
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.trace is not None:
        payload["trace_csv"] = _read_text(args.trace, "trace")
    if args.load_qtables is not None:
        if Path(args.load_qtables).exists():
            try:
                payload["qtables"] = json.loads(_read_text(args.load_qtables, "Q-table file"))
            except json.JSONDecodeError as exc:
                raise CliError(
                    f"invalid JSON in Q-table file {args.load_qtables}: {exc}", VALIDATION_EXIT
                ) from exc
        elif not args.fresh:
            raise CliError(
                f"Q-table file {args.load_qtables} not found (pass --fresh to start empty)",
                VALIDATION_EXIT,
            )
    result = _call_service("POST", "/experiments/run", payload, args.server)
    out = Path(args.out)
    _write_text(out, result["records_csv"])
    summary_path = Path(args.summary_out) if args.summary_out else out.with_suffix(".summary.json")
    _write_text(summary_path, json.dumps(result["summary"], indent=2, sort_keys=True) + "\n")
    if args.save_qtables is not None:
        if result.get("qtables") is None:
            raise CliError(f"policy {args.policy!r} produced no Q-tables to save", VALIDATION_EXIT)
        _write_text(
            Path(args.save_qtables),
            json.dumps(result["qtables"], indent=2, sort_keys=True) + "\n",
        )
    s = result["summary"]
    print(
        f"{s['policy']}: {s['intervals']} intervals, "
        f"violations {s['violation_rate_pct']:.2f}%, mean power {s['mean_power_w']:.3f} W"
    )
    return 0


def cmd_compare(args) -> int:
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    payload: dict = {"config": _read_config(args.config), "policies": policies}
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.trace is not None:
        payload["trace_csv"] = _read_text(args.trace, "trace")
    result = _call_service("POST", "/experiments/compare", payload, args.server)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, csv_text in result["records_csv"].items():
        _write_text(out_dir / f"{name}.csv", csv_text)
    _write_text(out_dir / "summary.json", json.dumps(result["summary"], indent=2, sort_keys=True) + "\n")
    summary = result["summary"]
    for name, stats in summary["policies"].items():
        print(
            f"{name}: violations {stats['violation_rate_pct']:.2f}%, "
            f"mean power {stats['mean_power_w']:.3f} W"
        )
    for other, pct in summary["savings_pct"].items():
        print(f"{summary['method']} vs {other}: {pct:.2f}% power saving")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("elastiq.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elastiq", description=__doc__)
    parser.add_argument("--server", default=None, help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-trace", help="generate a workload trace CSV")
    gen.add_argument("--kind", choices=["irregular", "diurnal"], required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--duration-s", type=float, default=None, dest="duration_s")
    gen.add_argument("--interval-s", type=float, default=None, dest="interval_s")
    gen.add_argument("--u-min", type=int, default=10, dest="u_min")
    gen.add_argument("--u-max", type=int, default=200, dest="u_max")
    gen.add_argument("--jump-prob", type=float, default=0.05, dest="jump_prob")
    gen.add_argument("--jump-scale", type=float, default=0.5, dest="jump_scale")
    gen.add_argument("--step-frac", type=float, default=0.02, dest="step_frac")
    gen.add_argument("--u-peak", type=int, default=220, dest="u_peak")
    gen.add_argument("--u-trough", type=int, default=20, dest="u_trough")
    gen.add_argument("--peak-hour", type=float, default=14.0, dest="peak_hour")
    gen.add_argument("--noise-frac", type=float, default=0.0, dest="noise_frac")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate_trace)

    runp = sub.add_parser("run", help="run one policy over a trace")
    runp.add_argument("--config", default=None, help="experiment config JSON")
    runp.add_argument("--trace", default=None, help="trace CSV (overrides config workload)")
    runp.add_argument("--policy", required=True)
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--out", required=True, help="per-interval records CSV path")
    runp.add_argument("--summary-out", default=None, dest="summary_out")
    runp.add_argument("--load-qtables", default=None, dest="load_qtables")
    runp.add_argument("--save-qtables", default=None, dest="save_qtables")
    runp.add_argument("--fresh", action="store_true", help="allow starting without a Q-table file")
    runp.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="run several policies over one trace")
    cmp_.add_argument("--config", default=None)
    cmp_.add_argument("--trace", default=None)
    cmp_.add_argument("--policies", required=True, help="comma-separated, method first")
    cmp_.add_argument("--seed", type=int, default=None)
    cmp_.add_argument("--out-dir", required=True, dest="out_dir")
    cmp_.set_defaults(func=cmd_compare)

    srv = sub.add_parser("serve", help="start the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate-trace":
        if args.duration_s is None:
            args.duration_s = 3600.0 if args.kind == "irregular" else 86400.0
        if args.interval_s is None:
            args.interval_s = 1.0 if args.kind == "irregular" else 24.0
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failures
        print(f"unexpected error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
