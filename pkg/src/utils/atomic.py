import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterator, Union


@contextmanager
def atomic_write(path: Union[str, Path], mode: str = "wb") -> Iterator[IO]:
    """
    Open a temporary file next to `path` and rename it into place on success.

    An exception inside the block removes the temporary file, so an
    interrupted run never leaves a partial artifact behind.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=str(target.parent))
    try:
        encoding = None if "b" in mode else "utf-8"
        with os.fdopen(fd, mode, encoding=encoding) as handle:
            yield handle
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise


def write_bytes_atomic(path: Union[str, Path], payload: bytes) -> str:
    """Write `payload` to `path` atomically and return the path as a string."""
    with atomic_write(path, "wb") as handle:
        handle.write(payload)
    return str(path)


def write_text_atomic(path: Union[str, Path], text: str) -> str:
    """Write `text` to `path` atomically and return the path as a string."""
    with atomic_write(path, "w") as handle:
        handle.write(text)
    return str(path)
