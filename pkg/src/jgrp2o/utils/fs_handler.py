import logging
import os
from typing import Protocol, Union

log = logging.getLogger(__name__)


class FSHandler(Protocol):
    def write(self, path: str, data: Union[bytes, str]) -> None:
        """Write file content into given path, creating parent folders."""

    def read(self, path: str) -> bytes:
        """Return file content from given path."""

    def exists(self, path: str) -> bool:
        """Whether a file exists at given path."""

    @classmethod
    def join_path(cls, *paths: str) -> str:
        """Concatenate file paths."""


class LocalFSHandler:
    """FSHandler over the local file system."""

    def write(self, path: str, data: Union[bytes, str]) -> None:
        folder = os.path.dirname(path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        content = data.encode('utf-8') if isinstance(data, str) else data
        with open(path, 'wb') as f:
            f.write(content)
        log.debug('Wrote %s bytes to %s', len(content), path)

    def read(self, path: str) -> bytes:
        with open(path, 'rb') as f:
            return f.read()

    def exists(self, path: str) -> bool:
        return os.path.isfile(path)

    @classmethod
    def join_path(cls, *paths: str) -> str:
        return os.path.join(*paths)
