#!/usr/bin/env python3
"""Validate environment variables for this project.

Usage:
  python scripts/validate_env.py            # routine checks
  python scripts/validate_env.py remote     # also require remote-generator settings

Exits with code 0 when every required variable is set, otherwise prints
the missing variables and exits with non-zero status.
"""
from __future__ import annotations

import os
import sys
from typing import Dict, List


# Only a remote-generator run needs anything from the environment.
REMOTE_REQUIRED_VARS: Dict[str, str] = {
    "SIGNAL_EVO_LLM_MODEL": "Model name sent to the chat completions endpoint",
    "SIGNAL_EVO_LLM_API_KEY": "API key (OPENAI_API_KEY is accepted instead)",
}


OPTIONAL_VARS: Dict[str, str] = {
    "SIGNAL_EVO_PROJECT_ROOT": "Project root override (optional)",
    "SIGNAL_EVO_RUN_DIR": "Default directory for evolution runs (optional)",
    "SIGNAL_EVO_LOG_LEVEL": "Logging level for signal_evo (optional)",
    "SIGNAL_EVO_LLM_BASE_URL": "OpenAI-compatible endpoint base URL (optional)",
    "SIGNAL_EVO_LLM_TEMPERATURE": "Sampling temperature for the remote generator (optional)",
}


def _is_set(name: str) -> bool:
    if os.environ.get(name) not in (None, ""):
        return True
    return name == "SIGNAL_EVO_LLM_API_KEY" and os.environ.get("OPENAI_API_KEY") not in (None, "")


def main(argv: List[str]) -> int:
    required = REMOTE_REQUIRED_VARS if "remote" in argv else {}
    missing = [name for name in required if not _is_set(name)]

    if missing:
        print("ERROR: missing required environment variables:")
        for m in missing:
            print(f" - {m}: {required.get(m, '')}")
        print("\nSet the variables (for example, create a .env or export them) and retry.")
        return 2

    print("All required environment variables are present.")
    print("Optional variables:")
    for name, desc in OPTIONAL_VARS.items():
        print(f" - {name}: {desc} (current='{os.environ.get(name)}')")

    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
