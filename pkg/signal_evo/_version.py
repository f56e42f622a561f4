from __future__ import annotations

import re
from pathlib import Path
from typing import Optional

_DIST_NAME = "signal-evo"


def _read_pyproject_version(pyproject_path: Path) -> Optional[str]:
    if not pyproject_path.exists():
        return None
    try:
        import tomllib  # Python 3.11+

        with pyproject_path.open("rb") as fh:
            data = tomllib.load(fh)
        project = data.get("project") if isinstance(data, dict) else None
        if isinstance(project, dict) and project.get("name") == _DIST_NAME:
            version = project.get("version")
            if isinstance(version, str):
                return version
        return None
    except ImportError:
        text = pyproject_path.read_text(encoding="utf8")
        if f'name = "{_DIST_NAME}"' not in text:
            return None
        m = re.search(r'^\s*version\s*=\s*"([^"]+)"', text, re.MULTILINE)
        return m.group(1) if m else None
    except Exception:
        return None


def get_version() -> str:
    """Version from the source tree's pyproject.toml, else installed metadata."""
    search_dir = Path(__file__).resolve().parent
    for _ in range(4):
        version = _read_pyproject_version(search_dir / "pyproject.toml")
        if version:
            return version
        if search_dir.parent == search_dir:
            break
        search_dir = search_dir.parent

    try:
        import importlib.metadata as _ilm

        return _ilm.version(_DIST_NAME)
    except Exception:
        return "0.0.0"


__version__ = get_version()
