"""Run the model adapter: ``arguard-adapter --host H --port P [--config FILE]``."""

from __future__ import annotations

import argparse
import sys

from .app import create_app
from .config import AdapterConfig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="arguard-adapter", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9000)
    parser.add_argument("--config", metavar="FILE", help="key-value config file")
    args = parser.parse_args(argv)

    try:
        config = (
            AdapterConfig.from_file(args.config)
            if args.config
            else AdapterConfig().with_env_credentials()
        )
        app = create_app(config)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
