"""sapt: install a set of packages, with their dependencies, from the configured repositories."""
import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from cli.common import EXIT_OK, add_verbosity, report_error, setup_logging
from config import Settings, get_settings
from models.errors import SdsError
from models.pydantic_models import ActionKind, InstallMode, PlanAction
from services.dep_lang import parse_cli_spec
from services.install_db import InstallDatabase
from services.lifecycle import LifecycleEngine
from services.repository import (
    fetch_all_indexes,
    fetch_packages,
    find_latest,
    load_sources,
    render_entry,
    search,
)
from services.resolver import resolve
from services.transport import Transport, default_transport, join_url
from utils.helpers import detect_platform, format_timestamp

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sapt", description=__doc__)
    add_verbosity(parser)
    commands = parser.add_subparsers(dest="command", required=True)

    install = commands.add_parser("install", help="resolve, download and install packages")
    install.add_argument("specs", nargs="+", metavar="SPEC", help="name, name=1.2, name>=1.2 ...")
    install.add_argument("--prefix", required=True, type=Path, help="installation root")
    install.add_argument("--dry-run", action="store_true", help="print the plan and stop")
    install.add_argument(
        "--no-replace", action="store_true", help="fail instead of replacing an installed version"
    )

    find = commands.add_parser("search", help="list packages whose name contains PATTERN")
    find.add_argument("pattern")

    show = commands.add_parser("show", help="print the index entry of the newest version")
    show.add_argument("name")
    show.add_argument("--prefix", type=Path, help="also report the version installed there")

    listing = commands.add_parser("list", help="list the packages installed in a prefix")
    listing.add_argument("--prefix", required=True, type=Path)
    return parser


def _indexes(settings: Settings, transport: Transport):
    return fetch_all_indexes(load_sources(settings.SDS_SOURCES), transport)


def cmd_install(args: argparse.Namespace, settings: Settings, transport: Transport) -> int:
    requests = [parse_cli_spec(spec) for spec in args.specs]
    indexes = _indexes(settings, transport)
    platform = detect_platform(settings.SDS_PLATFORM)
    installed = InstallDatabase.open(args.prefix).snapshot()

    plan = resolve(requests, installed, indexes, platform, allow_replace=not args.no_replace)
    sys.stdout.write(plan.serialize())
    if args.dry_run:
        return EXIT_OK

    cache_dir = Path(settings.SDS_CACHE).expanduser()
    work = [action for action in plan.actions if action.kind is not ActionKind.SKIP]
    archives = asyncio.run(
        fetch_packages(
            [(action.entry, action.source) for action in work],
            cache_dir,
            transport,
            settings.SDS_DOWNLOAD_WORKERS,
        )
    )
    archive_for = {action.name: path for action, path in zip(work, archives)}

    engine = LifecycleEngine(platform, cache_dir, transport, settings.SDS_HOOK_TIMEOUT)
    completed: List[PlanAction] = []
    for position, action in enumerate(plan.actions):
        if action.kind is ActionKind.SKIP:
            completed.append(action)
            continue
        mode = InstallMode.REPLACE if action.kind is ActionKind.REPLACE else InstallMode.FRESH
        try:
            engine.spkg_install(
                archive_for[action.name],
                args.prefix,
                mode,
                origin=join_url(action.source, action.entry.filename),
            )
        except SdsError as e:
            status = report_error(e)
            _print_summary(completed, action, plan.actions[position + 1:])
            return status
        completed.append(action)

    counts = {kind: sum(1 for a in plan.actions if a.kind is kind) for kind in ActionKind}
    print(
        f"{counts[ActionKind.INSTALL]} installed, {counts[ActionKind.REPLACE]} replaced, "
        f"{counts[ActionKind.SKIP]} skipped"
    )
    return EXIT_OK


def _print_summary(completed: Sequence[PlanAction], failed: PlanAction, rest: Sequence[PlanAction]) -> None:
    def names(actions: Sequence[PlanAction]) -> str:
        return " ".join(f"{a.name}={a.version}" for a in actions) or "-"

    print(f"completed: {names(completed)}")
    print(f"failed: {failed.name}={failed.version}")
    print(f"not attempted: {names(rest)}")


def cmd_search(args: argparse.Namespace, settings: Settings, transport: Transport) -> int:
    for name, versions in search(_indexes(settings, transport), args.pattern).items():
        print(f"{name} {' '.join(versions)}")
    return EXIT_OK


def cmd_show(args: argparse.Namespace, settings: Settings, transport: Transport) -> int:
    entry, base_url = find_latest(_indexes(settings, transport), args.name)
    sys.stdout.write(render_entry(entry))
    print(f"Repository: {base_url}")
    if args.prefix is not None:
        record = InstallDatabase.open(args.prefix).query(args.name)
        print(f"Installed: {record.version if record else 'no'}")
    return EXIT_OK


def cmd_list(args: argparse.Namespace, settings: Settings, transport: Transport) -> int:
    for record in InstallDatabase.open(args.prefix).list_records():
        print(f"{record.name} {record.version} {record.platform} {format_timestamp(record.installed_at)}")
    return EXIT_OK


COMMANDS = {
    "install": cmd_install,
    "search": cmd_search,
    "show": cmd_show,
    "list": cmd_list,
}


def main(argv: Optional[Sequence[str]] = None, transport: Optional[Transport] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(settings, args.verbose)
    try:
        return COMMANDS[args.command](args, settings, transport or default_transport())
    except SdsError as e:
        return report_error(e)


if __name__ == "__main__":
    sys.exit(main())
