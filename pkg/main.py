import logging
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI

from api.endpoints import router
from config import settings

logger = logging.getLogger(__name__)


def create_app(repo_dir: Optional[Union[str, Path]] = None) -> FastAPI:
    """Read-only HTTP view of a repository directory built by ``sds-index build``."""
    app = FastAPI(
        title=settings.APP_NAME,
        description="SDS package repository",
        version=settings.VERSION,
        debug=settings.DEBUG,
    )
    app.state.repo_dir = Path(repo_dir or settings.SDS_REPO_DIR).expanduser().absolute()
    app.include_router(router)
    logger.info(f"Serving repository {app.state.repo_dir}")
    return app


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(create_app(), host=settings.HOST, port=settings.PORT)
