"""The package installation engine.

Every package goes through the same six stages::

    extract -> depends -> configure -> build -> install -> register

Each stage runs ``pre-<stage>`` (if the package has it), then either the
``<stage>`` hook or the default behavior, then ``post-<stage>``. Registration
is always done by the engine itself.
"""
import logging
import os
import shutil
import subprocess
import tarfile
import tempfile
import time
import zipfile
from pathlib import Path, PurePosixPath
from typing import Callable, Dict, List, Optional, Sequence, Union

from database import get_db
from models.errors import (
    AlreadyRegistered,
    CorruptArchive,
    DefaultToolMissing,
    DependsUnsatisfied,
    HookFailed,
    PathTraversal,
    PlatformUnsupported,
    StageFailed,
    TransportError,
    UpstreamFetchFailed,
)
from models.pydantic_models import (
    BuildContext,
    Executor,
    HookKind,
    InstallMode,
    InstallRecord,
    PackageManifest,
    Phase,
    SatisfactionStatus,
    Stage,
    StageReport,
    UpstreamKind,
)
from models.version import Platform
from services.install_db import InstallDatabase
from services.package_format import check_members, is_package_archive, load_package, unpack
from services.transport import Transport, default_transport
from utils.helpers import atomic_write_bytes, generate_hash, utc_now

logger = logging.getLogger(__name__)

STAGE_ORDER = list(Stage)
PHASE_ORDER = [Phase.PRE, Phase.MAIN, Phase.POST]
MAKEFILE_NAMES = ("GNUmakefile", "makefile", "Makefile")


class LifecycleEngine:
    def __init__(
        self,
        platform: Platform,
        download_cache: Union[str, Path],
        transport: Optional[Transport] = None,
        hook_timeout: Optional[float] = None,
        clock: Callable = utc_now,
    ):
        self.platform = platform
        self.download_cache = Path(download_cache).expanduser()
        self.transport = transport or default_transport()
        self.hook_timeout = hook_timeout
        self.clock = clock

    # --- whole-package installation -------------------------------------

    def spkg_install(
        self,
        package: Union[str, Path],
        prefix: Union[str, Path],
        mode: InstallMode = InstallMode.FRESH,
        origin: Optional[str] = None,
    ) -> List[StageReport]:
        """Install one package (``.spkg`` archive or unpacked tree) into ``prefix``."""
        package = Path(package)
        with tempfile.TemporaryDirectory(prefix="spkg-") as scratch:
            if is_package_archive(package):
                root = unpack(package, scratch)
            else:
                root = package
            manifest = load_package(root)

            if not any(p.matches(self.platform) for p in manifest.platforms):
                raise PlatformUnsupported(
                    f"{manifest.name} {manifest.version} supports "
                    f"{', '.join(str(p) for p in manifest.platforms)}, not {self.platform}"
                )

            with get_db(prefix) as db:
                if mode is InstallMode.FRESH:
                    existing = db.query(manifest.name)
                    if existing is not None:
                        raise AlreadyRegistered(manifest.name, str(existing.version))
                ctx = self._make_context(manifest, root.absolute(), db, mode, origin or str(package.absolute()))
                return self._run_pipeline(manifest, ctx, db)

    def _make_context(
        self,
        manifest: PackageManifest,
        root: Path,
        db: InstallDatabase,
        mode: InstallMode,
        origin: str,
    ) -> BuildContext:
        prefix = db.prefix
        slot = f"{manifest.name}_{manifest.version}"
        build_dir = prefix.build_root / slot
        if build_dir.exists():
            shutil.rmtree(build_dir)
        build_dir.mkdir(parents=True)
        log_dir = prefix.log_dir / slot
        log_dir.mkdir(parents=True, exist_ok=True)

        env = dict(os.environ)
        env.update(
            {
                "SDS_NAME": manifest.name,
                "SDS_VERSION": str(manifest.version),
                "SDS_PREFIX": str(prefix.path),
                "SDS_PKG_DIR": str(root / "pkg"),
                "SDS_PLATFORM": str(self.platform),
                "PATH": os.pathsep.join(filter(None, [str(prefix.path / "bin"), env.get("PATH", "")])),
            }
        )
        return BuildContext(
            package_root=root,
            build_dir=build_dir,
            source_dir=build_dir,
            prefix=prefix,
            platform=self.platform,
            env=env,
            download_cache=self.download_cache,
            log_dir=log_dir,
            mode=mode,
            origin=origin,
        )

    def _run_pipeline(self, manifest: PackageManifest, ctx: BuildContext, db: InstallDatabase) -> List[StageReport]:
        reports: List[StageReport] = []
        try:
            for stage in STAGE_ORDER:
                reports.extend(self.run_stage(stage, manifest, ctx, db))
        except Exception:
            logger.error(
                f"Installation of {manifest.name} {manifest.version} failed; "
                f"build directory kept at {ctx.build_dir}"
            )
            raise
        shutil.rmtree(ctx.build_dir, ignore_errors=True)
        logger.info(f"Installed {manifest.name} {manifest.version} into {ctx.prefix.path}")
        return reports

    # --- single stage ---------------------------------------------------

    def run_stage(
        self,
        stage: Stage,
        manifest: PackageManifest,
        ctx: BuildContext,
        db: InstallDatabase,
    ) -> List[StageReport]:
        reports = []
        for phase in PHASE_ORDER:
            # registration itself is never delegated to the package
            hooked = manifest.has_hook(stage, phase) and not (stage is Stage.REGISTER and phase is Phase.MAIN)
            if hooked:
                report = self._run_hook(stage, phase, ctx)
            elif phase is Phase.MAIN:
                report = self._run_default(stage, manifest, ctx, db)
            else:
                continue
            logger.info(
                f"{manifest.name}: {stage.value}/{phase.value} ({report.executor.value}) "
                f"finished in {report.duration:.2f}s"
            )
            reports.append(report)
        return reports

    def _log_path(self, ctx: BuildContext, stage: Stage, phase: Phase) -> Path:
        return ctx.log_dir / f"{stage.value}.{phase.value}.log"

    def _phase_env(self, ctx: BuildContext, stage: Stage, phase: Phase) -> Dict[str, str]:
        env = dict(ctx.env)
        env["SDS_BUILD_DIR"] = str(ctx.source_dir)
        env["SDS_STAGE"] = stage.value
        env["SDS_PHASE"] = phase.value
        return env

    def _run_hook(self, stage: Stage, phase: Phase, ctx: BuildContext) -> StageReport:
        hook_name = HookKind(stage=stage, phase=phase).filename
        hook = ctx.package_root / hook_name
        cwd = ctx.package_root if (stage is Stage.EXTRACT and phase is Phase.PRE) else ctx.source_dir
        log_path = self._log_path(ctx, stage, phase)
        started = time.monotonic()
        with open(log_path, "wb") as log:
            try:
                completed = subprocess.run(
                    [str(hook)],
                    cwd=cwd,
                    env=self._phase_env(ctx, stage, phase),
                    stdin=subprocess.DEVNULL,
                    stdout=log,
                    stderr=subprocess.STDOUT,
                    timeout=self.hook_timeout,
                )
                status = completed.returncode
            except subprocess.TimeoutExpired:
                log.write(f"\n{hook_name}: timed out after {self.hook_timeout}s\n".encode())
                status = -1
            except OSError as e:
                log.write(f"\n{hook_name}: cannot execute: {e}\n".encode())
                status = 126
        report = StageReport(
            stage=stage,
            phase=phase,
            executor=Executor.HOOK,
            exit_status=status,
            log_path=log_path,
            duration=time.monotonic() - started,
        )
        if status != 0:
            raise HookFailed(stage.value, phase.value, status, log_path)
        return report

    # --- default behaviors ----------------------------------------------

    def _run_default(
        self,
        stage: Stage,
        manifest: PackageManifest,
        ctx: BuildContext,
        db: InstallDatabase,
    ) -> StageReport:
        log_path = self._log_path(ctx, stage, Phase.MAIN)
        started = time.monotonic()
        with open(log_path, "wb") as log:
            if stage is Stage.EXTRACT:
                self._default_extract(manifest, ctx, log)
            elif stage is Stage.DEPENDS:
                self._default_depends(manifest, db, log)
            elif stage is Stage.CONFIGURE:
                self._default_configure(ctx, log)
            elif stage is Stage.BUILD:
                self._default_make(ctx, log, stage, [])
            elif stage is Stage.INSTALL:
                self._default_make(ctx, log, stage, ["install"])
            else:
                self._default_register(manifest, ctx, db, log)
        return StageReport(
            stage=stage,
            phase=Phase.MAIN,
            executor=Executor.DEFAULT,
            exit_status=0,
            log_path=log_path,
            duration=time.monotonic() - started,
        )

    def _default_extract(self, manifest: PackageManifest, ctx: BuildContext, log) -> None:
        upstream = manifest.upstream
        if upstream.kind is UpstreamKind.NONE:
            log.write(b"no upstream: nothing to extract\n")
            return
        if upstream.kind is UpstreamKind.EMBEDDED:
            archive = ctx.package_root / "pkg" / upstream.archive_name
        else:
            archive = self._fetch_upstream(upstream.url)
        log.write(f"extracting {archive} into {ctx.build_dir}\n".encode())
        extract_upstream(archive, ctx.build_dir)

        entries = list(ctx.build_dir.iterdir())
        if len(entries) == 1 and entries[0].is_dir():
            ctx.source_dir = entries[0]
        log.write(f"sources in {ctx.source_dir}\n".encode())

    def _fetch_upstream(self, url: str) -> Path:
        cached = self.download_cache / "upstream" / upstream_cache_name(url)
        if cached.is_file():
            logger.debug(f"Using cached upstream {cached}")
            return cached
        try:
            data = self.transport.get(url)
        except TransportError as e:
            raise UpstreamFetchFailed(str(e)) from e
        cached.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_bytes(cached, data)
        logger.info(f"Fetched upstream {url}")
        return cached

    def _default_depends(self, manifest: PackageManifest, db: InstallDatabase, log) -> None:
        failing = []
        for clause in manifest.depends:
            verdict = db.satisfies(clause)
            if verdict.status is SatisfactionStatus.SATISFIED:
                log.write(f"{clause}: satisfied by {verdict.version}\n".encode())
            elif verdict.status is SatisfactionStatus.VIOLATING:
                failing.append(f"{clause} (installed: {verdict.version})")
            else:
                failing.append(f"{clause} (not installed)")
        if failing:
            log.write(("unsatisfied: " + ", ".join(failing) + "\n").encode())
            raise DependsUnsatisfied(failing)

    def _default_configure(self, ctx: BuildContext, log) -> None:
        script = ctx.source_dir / "configure"
        if not script.is_file():
            log.write(b"no configure script: nothing to do\n")
            return
        if os.access(script, os.X_OK):
            command = ["./configure"]
        else:
            shell = shutil.which("sh", path=ctx.env.get("PATH"))
            if shell is None:
                raise DefaultToolMissing("configure is not executable and no 'sh' was found on PATH")
            command = [shell, "./configure"]
        command.append(f"--prefix={ctx.prefix.path}")
        self._run_default_command(command, ctx, log, Stage.CONFIGURE)

    def _default_make(self, ctx: BuildContext, log, stage: Stage, targets: Sequence[str]) -> None:
        if not any((ctx.source_dir / name).is_file() for name in MAKEFILE_NAMES):
            log.write(b"no makefile: nothing to do\n")
            return
        make = shutil.which("make", path=ctx.env.get("PATH"))
        if make is None:
            raise DefaultToolMissing(f"a makefile is present but 'make' was not found on PATH ({stage.value})")
        self._run_default_command([make, *targets], ctx, log, stage)

    def _run_default_command(self, command: List[str], ctx: BuildContext, log, stage: Stage) -> None:
        log.write(("$ " + " ".join(command) + "\n").encode())
        log.flush()
        completed = subprocess.run(
            command,
            cwd=ctx.source_dir,
            env=self._phase_env(ctx, stage, Phase.MAIN),
            stdin=subprocess.DEVNULL,
            stdout=log,
            stderr=subprocess.STDOUT,
        )
        if completed.returncode != 0:
            raise StageFailed(stage.value, Phase.MAIN.value, completed.returncode, Path(log.name))

    def _default_register(self, manifest: PackageManifest, ctx: BuildContext, db: InstallDatabase, log) -> None:
        resolved = []
        for clause in manifest.depends:
            record = db.query(clause.name)
            if record is not None:
                resolved.append(f"{record.name}={record.version}")
        record = InstallRecord(
            name=manifest.name,
            version=manifest.version,
            platform=ctx.platform,
            installed_at=self.clock(),
            origin=ctx.origin,
            resolved_deps=resolved,
        )
        db.register(record, ctx.mode)
        log.write(f"registered {manifest.name} {manifest.version} ({ctx.mode.value})\n".encode())


def upstream_cache_name(url: str) -> str:
    """Cache file name for an upstream URL: digest of the full URL plus its basename.

    The basename keeps the archive suffix that ``extract_upstream`` dispatches on.
    """
    basename = PurePosixPath(url.split("?", 1)[0].rstrip("/")).name or "upstream"
    return f"{generate_hash(url.encode())[:16]}-{basename}"


def extract_upstream(archive: Path, dest: Path) -> None:
    """Unpack a tar or zip upstream archive, refusing members outside ``dest``."""
    try:
        if zipfile.is_zipfile(archive):
            with zipfile.ZipFile(archive) as zf:
                for name in zf.namelist():
                    if name.startswith("/") or ".." in PurePosixPath(name).parts:
                        raise PathTraversal(name)
                zf.extractall(dest)
            return
        with tarfile.open(archive, mode="r:*") as tar:
            check_members(tar.getmembers())
            if hasattr(tarfile, "data_filter"):
                tar.extractall(dest, filter="data")
            else:
                tar.extractall(dest)
    except (tarfile.TarError, zipfile.BadZipFile, EOFError) as e:
        raise CorruptArchive(f"{archive}: {e}") from e
