import logging
from pathlib import Path
from typing import List

from fastapi import APIRouter, Depends, HTTPException, Request, status
from fastapi.responses import FileResponse, PlainTextResponse

from models.errors import SdsError
from models.pydantic_models import HealthResponse, IndexEntry, PackageSummary, RepositoryIndex
from services.package_format import PACKAGE_SUFFIX
from services.repository import INDEX_FILENAME, parse_index, search

logger = logging.getLogger(__name__)

router = APIRouter()


def get_repo_dir(request: Request) -> Path:
    return request.app.state.repo_dir


def get_index(request: Request, repo_dir: Path = Depends(get_repo_dir)) -> RepositoryIndex:
    """Parse the repository Index on every request so rebuilds show up at once."""
    path = repo_dir / INDEX_FILENAME
    try:
        return parse_index(path.read_text(encoding="utf-8"), str(request.base_url))
    except FileNotFoundError:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail="Repository has no Index; run 'sds-index build' first",
        )
    except (SdsError, UnicodeDecodeError) as e:
        logger.error(f"Unreadable index {path}: {e}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Repository index is unreadable: {e}",
        )


@router.get("/Index", response_class=PlainTextResponse)
async def get_index_file(repo_dir: Path = Depends(get_repo_dir)):
    """Raw Index file, byte for byte"""
    path = repo_dir / INDEX_FILENAME
    if not path.is_file():
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Index not found")
    return PlainTextResponse(path.read_text(encoding="utf-8"))


@router.get("/{stem}" + PACKAGE_SUFFIX)
async def get_archive(stem: str, repo_dir: Path = Depends(get_repo_dir)):
    filename = stem + PACKAGE_SUFFIX
    path = repo_dir / filename
    if "/" in stem or stem.startswith(".") or not path.is_file():
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"{filename} not found")
    return FileResponse(path, media_type="application/gzip", filename=filename)


@router.get("/packages", response_model=List[PackageSummary])
async def list_packages(index: RepositoryIndex = Depends(get_index)):
    descriptions = {entry.name: entry.description for entry in index.entries}
    return [
        PackageSummary(name=name, versions=versions, description=descriptions[name])
        for name, versions in search([index], "").items()
    ]


@router.get("/packages/{name}", response_model=List[IndexEntry])
async def get_package(name: str, index: RepositoryIndex = Depends(get_index)):
    """All versions of one package, oldest first"""
    entries = [entry for entry in index.entries if entry.name == name]
    if not entries:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Package {name} not found")
    return entries


@router.get("/health", response_model=HealthResponse)
async def health_check(
    repo_dir: Path = Depends(get_repo_dir), index: RepositoryIndex = Depends(get_index)
):
    return HealthResponse(status="healthy", packages=len(index.entries), repository=str(repo_dir))
