"""sds-index: build or serve a repository directory."""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from cli.common import EXIT_OK, add_verbosity, report_error, setup_logging
from config import Settings, get_settings
from models.errors import SdsError
from services.repository import build_index

logger = logging.getLogger(__name__)

# archives that were skipped while building; the Index is still written
EXIT_PARTIAL = 1


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sds-index", description=__doc__)
    add_verbosity(parser)
    commands = parser.add_subparsers(dest="command", required=True)

    build = commands.add_parser("build", help="scan DIR for .spkg archives and write DIR/Index")
    build.add_argument("directory", type=Path)

    serve = commands.add_parser("serve", help="serve DIR read-only over HTTP")
    serve.add_argument("directory", type=Path, nargs="?", default=Path(settings.SDS_REPO_DIR))
    serve.add_argument("--host", default=settings.HOST)
    serve.add_argument("--port", type=int, default=settings.PORT)
    return parser


def cmd_build(args: argparse.Namespace) -> int:
    result = build_index(args.directory)
    for entry in result.entries:
        print(f"{entry.filename} {entry.sha256}")
    for filename, message in result.errors:
        print(f"error: {filename}: {message}", file=sys.stderr)
    return EXIT_PARTIAL if result.errors else EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from main import create_app

    uvicorn.run(create_app(args.directory), host=args.host, port=args.port)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    args = build_parser(settings).parse_args(argv)
    setup_logging(settings, args.verbose)
    try:
        if args.command == "build":
            return cmd_build(args)
        return cmd_serve(args)
    except SdsError as e:
        return report_error(e)


if __name__ == "__main__":
    sys.exit(main())
