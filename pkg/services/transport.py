"""Byte transports for repository and upstream URLs (file, http, https)."""
import logging
from pathlib import Path
from typing import Dict, Optional, Protocol
from urllib.parse import urlparse
from urllib.request import url2pathname

import requests

from models.errors import TransportError

logger = logging.getLogger(__name__)


class Transport(Protocol):
    def get(self, url: str) -> bytes: ...


def file_url_to_path(url: str) -> Path:
    parsed = urlparse(url)
    if parsed.netloc not in ("", "localhost"):
        raise TransportError(url, f"unsupported file URL host {parsed.netloc!r}")
    return Path(url2pathname(parsed.path))


def path_to_file_url(path: Path) -> str:
    return Path(path).absolute().as_uri()


def join_url(base_url: str, name: str) -> str:
    return f"{base_url.rstrip('/')}/{name}"


class FileTransport:
    def get(self, url: str) -> bytes:
        path = file_url_to_path(url)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise TransportError(url, "404 not found") from None
        except OSError as e:
            raise TransportError(url, e.strerror or str(e)) from e


class HttpTransport:
    def __init__(self, timeout: float = 60.0, session: Optional[requests.Session] = None):
        self.timeout = timeout
        self.session = session or requests.Session()

    def get(self, url: str) -> bytes:
        try:
            response = self.session.get(url, timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(url, str(e)) from e
        if response.status_code != 200:
            raise TransportError(url, f"{response.status_code} {response.reason}")
        return response.content


class SchemeTransport:
    """Dispatches on the URL scheme."""

    def __init__(self, transports: Optional[Dict[str, Transport]] = None):
        http = HttpTransport()
        self.transports: Dict[str, Transport] = transports or {
            "file": FileTransport(),
            "http": http,
            "https": http,
        }

    def get(self, url: str) -> bytes:
        scheme = urlparse(url).scheme.lower()
        transport = self.transports.get(scheme)
        if transport is None:
            raise TransportError(url, f"unsupported scheme {scheme!r}")
        logger.debug(f"GET {url}")
        return transport.get(url)


def default_transport() -> Transport:
    return SchemeTransport()
