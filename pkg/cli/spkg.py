"""spkg: process a single SDS package (archive or unpacked tree)."""
import argparse
import logging
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from cli.common import EXIT_OK, add_verbosity, report_error, setup_logging
from config import Settings, get_settings
from models.errors import SdsError, UsageError
from models.pydantic_models import InstallMode, PackageManifest
from services.dep_lang import render_depends_field
from services.lifecycle import LifecycleEngine
from services.package_format import is_package_archive, load_package, pack, unpack
from services.transport import Transport, default_transport
from utils.helpers import detect_platform

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spkg", description=__doc__)
    add_verbosity(parser)
    parser.add_argument("package", type=Path, help=".spkg archive or package directory")
    action = parser.add_mutually_exclusive_group()
    action.add_argument("--info", action="store_true", help="print the manifest and exit")
    action.add_argument("--pack", action="store_true", help="build <name>_<version>.spkg from a directory")
    parser.add_argument("--prefix", type=Path, help="installation root")
    parser.add_argument("--replace", action="store_true", help="replace an installed version")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory for --pack")
    return parser


def describe(manifest: PackageManifest) -> str:
    lines = [
        f"Name: {manifest.name}",
        f"Version: {manifest.version}",
        f"License: {manifest.license}",
        f"Platform: {' '.join(str(p) for p in manifest.platforms)}",
        f"Maintainer: {manifest.maintainer}",
        f"Upstream: {manifest.upstream.url or manifest.upstream.archive_name or manifest.upstream.kind.value}",
        f"Depends: {render_depends_field(manifest.depends)}",
        f"Hooks: {' '.join(sorted(hook.filename for hook in manifest.hooks))}",
    ]
    if manifest.description:
        lines.append(f"Description: {manifest.description}")
    return "\n".join(lines) + "\n"


def read_manifest(package: Path) -> PackageManifest:
    if not is_package_archive(package):
        return load_package(package)
    with tempfile.TemporaryDirectory(prefix="spkg-info-") as scratch:
        return load_package(unpack(package, scratch))


def run(args: argparse.Namespace, settings: Settings, transport: Transport) -> int:
    if args.info:
        sys.stdout.write(describe(read_manifest(args.package)))
        return EXIT_OK
    if args.pack:
        print(pack(args.package, args.out))
        return EXIT_OK
    if args.prefix is None:
        raise UsageError("--prefix is required to install")

    platform = detect_platform(settings.SDS_PLATFORM)
    engine = LifecycleEngine(platform, settings.SDS_CACHE, transport, settings.SDS_HOOK_TIMEOUT)
    mode = InstallMode.REPLACE if args.replace else InstallMode.FRESH
    reports = engine.spkg_install(args.package, args.prefix, mode)
    for report in reports:
        print(f"{report.stage.value} {report.phase.value} {report.executor.value} {report.exit_status}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None, transport: Optional[Transport] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(settings, args.verbose)
    try:
        return run(args, settings, transport or default_transport())
    except SdsError as e:
        return report_error(e)


if __name__ == "__main__":
    sys.exit(main())
