from __future__ import annotations

import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigParseError


def load_toml(source: str | os.PathLike) -> dict:
    """Parse TOML from a path or, for ``str`` containing a newline, from text."""
    try:
        if isinstance(source, str) and "\n" in source:
            return tomllib.loads(source)
        with open(source, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"malformed TOML: {exc}") from None
    except OSError as exc:
        raise ConfigParseError(f"cannot read {source}: {exc.strerror}") from None
