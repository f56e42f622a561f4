"""Legacy setuptools entry point; `pyproject.toml` is canonical.

Kept for tooling that still calls ``python setup.py``. Version and
runtime requirements are read from `pyproject.toml` and
`requirements.txt` so the three files cannot drift apart.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import List

from setuptools import find_packages, setup

HERE = Path(__file__).resolve().parent


def _version() -> str:
    text = (HERE / "pyproject.toml").read_text(encoding="utf8")
    m = re.search(r'^\s*version\s*=\s*"([^"]+)"', text, flags=re.MULTILINE)
    return m.group(1) if m else "0.0.0"


def _requirements(name: str) -> List[str]:
    path = HERE / name
    if not path.exists():
        return []
    lines = (line.strip() for line in path.read_text(encoding="utf8").splitlines())
    return [line for line in lines if line and not line.startswith("#")]


setup(
    name="signal-evo",
    version=_version(),
    description="Evolution of interpretable traffic-signal control skills",
    packages=find_packages(include=("signal_evo", "signal_evo.*")),
    package_data={"signal_evo.config": ["scenarios/*.yml", "skill_bank/*.json"]},
    install_requires=_requirements("requirements.txt"),
    extras_require={"dev": _requirements("requirements-dev.txt")},
    entry_points={
        "console_scripts": [
            "signal-evo=signal_evo.cli:main",
            "signal-evo-version=signal_evo.version_info_cli:main",
        ]
    },
    python_requires=">=3.9",
)
