"""Thin command-line client for the experiment service.

Subcommands build an ExperimentConfig from flags and POST it to the
service; by default the requests run against an in-process instance of the
app (no server needed), while --server targets a running one.  `serve`
starts the service under uvicorn.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class _RequestFailed(Exception):
    def __init__(self, code: int, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def _post(path: str, payload: dict, server: str | None) -> dict:
    if server:
        response = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
    else:
        from .service import app

        async def go():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://fpdiff"
            ) as client:
                return await client.post(path, json=payload, timeout=None)

        response = asyncio.run(go())
    if response.status_code >= 500:
        raise _RequestFailed(EXIT_NUMERICAL, _detail(response))
    if response.status_code >= 400:
        raise _RequestFailed(EXIT_CONFIG, _detail(response))
    return response.json()


def _detail(response) -> str:
    try:
        return str(response.json().get("detail", response.text))
    except ValueError:
        return response.text


def _parse_sizes(text: str) -> list[list[int]]:
    sizes = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            sizes.append([int(v) for v in chunk.split("x")])
        except ValueError as exc:
            raise argparse.ArgumentTypeError(
                f"bad size {chunk!r}; expected numbers joined by 'x', like 200x10"
            ) from exc
    return sizes


def _parse_estimators(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--experiment", required=True,
                        choices=["newton_logistic", "ip_qp", "ridge_gd",
                                 "quadratic_synthetic", "bilevel_ridge"])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--sizes", type=_parse_sizes, default=[],
                        help="comma-separated size tuples, e.g. 200x10,500x20")
    parser.add_argument("--estimators", type=_parse_estimators,
                        default=["autodiff", "implicit", "onestep"],
                        help="comma-separated subset of "
                             "autodiff,implicit,onestep,kstep")
    parser.add_argument("--k", type=int, default=64,
                        help="inner iteration budget / accuracy grid limit")
    parser.add_argument("--window", type=int, default=None,
                        help="truncation window K for the kstep estimator")
    parser.add_argument("--cond", type=float, default=100.0, dest="cond",
                        help="target Hessian condition number (ridge)")
    parser.add_argument("--alpha", choices=["inv_L", "two_over_muL"],
                        default="two_over_muL",
                        help="gradient step rule: 1/L or 2/(mu+L)")
    parser.add_argument("--reps", type=int, default=5,
                        help="timing repetitions (median reported)")
    parser.add_argument("--outer-steps", type=int, default=50)
    parser.add_argument("--outer-alpha", type=float, default=None)
    parser.add_argument("--out", type=Path, default=None,
                        help="write CSV here instead of stdout")
    parser.add_argument("--dump-instances", type=Path, default=None,
                        help="directory for generated problem instance files")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; in-process if unset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpdiff",
        description="fixed-point differentiation experiments",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("accuracy", "error-versus-iteration curves"),
        ("timing", "solve versus solve-plus-estimator wall times"),
        ("bilevel", "hypergradient descent trajectories"),
    ):
        sub = commands.add_parser(name, help=blurb)
        _add_run_flags(sub)
    st = commands.add_parser("selftest", help="identity and consistency checks")
    st.add_argument("--server", default=None)
    srv = commands.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8151)
    return parser


def _config_payload(args: argparse.Namespace) -> dict:
    return {
        "experiment": args.experiment,
        "sizes": args.sizes,
        "seed": args.seed,
        "estimators": args.estimators,
        "k": args.k,
        "window": args.window,
        "cond_target": args.cond,
        "alpha_choice": args.alpha,
        "reps": args.reps,
        "outer_steps": args.outer_steps,
        "alpha_outer": args.outer_alpha,
        "output_path": str(args.out) if args.out else None,
        "dump_instances": str(args.dump_instances) if args.dump_instances else None,
    }


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("accuracy", "timing", "bilevel"):
            body = _post(f"/run/{args.command}", _config_payload(args), args.server)
            _emit(body["csv"], args.out)
            return EXIT_OK
        if args.command == "selftest":
            body = _post("/selftest", {}, args.server)
            sys.stdout.write(body["report"])
            return EXIT_OK if body["passed"] else EXIT_NUMERICAL
        if args.command == "serve":
            import uvicorn

            from .service import app

            uvicorn.run(app, host=args.host, port=args.port)
            return EXIT_OK
    except _RequestFailed as failure:
        print(f"error: {failure.detail}", file=sys.stderr)
        return failure.code
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError(f"unhandled command {args.command}")


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
