from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # Application settings
    APP_NAME: str = "SDS Repository"
    VERSION: str = "1.0.0"
    DEBUG: bool = False
    HOST: str = "127.0.0.1"
    PORT: int = 8000

    # Client settings
    SDS_SOURCES: str = "~/.sds/sources"
    SDS_CACHE: str = "~/.sds/cache"
    SDS_LOG_LEVEL: str = "WARNING"
    SDS_PLATFORM: Optional[str] = None  # override of the detected os-arch
    SDS_DOWNLOAD_WORKERS: int = 4

    # Builds run as long as they need unless a limit is set (seconds)
    SDS_HOOK_TIMEOUT: Optional[float] = None

    # Repository server
    SDS_REPO_DIR: str = "."


def get_settings() -> Settings:
    return Settings()


settings = Settings()
