"""Command-line entry point for the reference policy server."""

from __future__ import annotations

import argparse
import logging
import sys

from .server import ServerConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="policyserver", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8700)
    parser.add_argument(
        "--backend",
        choices=["stub_constant", "stub_greedy", "external_model"],
        default="stub_constant",
    )
    parser.add_argument("--k", type=int, default=64)
    parser.add_argument("--constant-skill", type=int, default=0, dest="constant_skill")
    parser.add_argument("--codebook", default=None, help="codebook JSON (required for stub_greedy)")
    parser.add_argument(
        "--forbidden",
        default="obstacle,out_of_bounds",
        help="comma-separated forbidden labels for stub_greedy",
    )
    parser.add_argument("--lam-forbidden", type=float, default=10.0, dest="lam_forbidden")
    parser.add_argument("--lam-close", type=float, default=5.0, dest="lam_close")
    parser.add_argument(
        "--model-hook",
        default=None,
        dest="model_hook",
        help="package.module:callable implementing the ModelHook contract",
    )
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    config = ServerConfig(
        host=args.host,
        port=args.port,
        backend=args.backend,
        k=args.k,
        constant_skill=args.constant_skill,
        codebook_path=args.codebook,
        forbidden=tuple(name for name in args.forbidden.split(",") if name),
        lam_forbidden=args.lam_forbidden,
        lam_close=args.lam_close,
        model_hook=args.model_hook,
    )
    try:
        server = serve(config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    host, port = server.server_address[:2]
    print(f"policyserver: backend={config.backend} k={config.k} listening on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
