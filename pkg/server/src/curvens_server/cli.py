"""Console entry point: serve a config file or the built-in roster."""
from __future__ import annotations

import argparse
import json
import sys

from .config import PAPER_ROSTER, load_config, paper_config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="curvens-server",
        description="HTTP server exposing transformer checkpoints over the "
                    "curvens wire protocol.",
    )
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="JSON server config")
    group.add_argument("--preset", choices=["paper"],
                       help="serve the built-in experiment roster")
    group.add_argument("--print-preset", action="store_true",
                       help="print the built-in roster config and exit")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    parser.add_argument("--device")
    args = parser.parse_args(argv)

    if args.print_preset:
        json.dump({"models": PAPER_ROSTER}, sys.stdout, indent=2)
        print()
        return 0

    try:
        config = load_config(args.config) if args.config else paper_config()
    except (OSError, ValueError, KeyError) as e:
        print(f"error: bad server config: {e}", file=sys.stderr)
        return 2
    overrides = {k: v for k, v in
                 (("host", args.host), ("port", args.port), ("device", args.device))
                 if v is not None}
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)

    import uvicorn

    from .app import create_app

    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
