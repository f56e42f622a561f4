# Runtime settings resolved from the environment.
#
# PROJECT_ROOT points at the repository root (two levels up from
# `signal_evo/config`) unless SIGNAL_EVO_PROJECT_ROOT overrides it.
import os

from signal_evo.errors import ConfigError

_here = os.path.dirname(__file__)
_computed_root = os.path.abspath(os.path.join(_here, "..", ".."))
PROJECT_ROOT = os.environ.get("SIGNAL_EVO_PROJECT_ROOT", _computed_root)

SCENARIO_DIR = os.path.join(_here, "scenarios")
SKILL_BANK_DIR = os.path.join(_here, "skill_bank")

# Where `signal-evo evolve` writes runs when --out is not given.
RUN_DIR = os.environ.get("SIGNAL_EVO_RUN_DIR", os.path.join(PROJECT_ROOT, "runs"))

# Remote generator (OpenAI-compatible chat completions endpoint).
DEFAULT_LLM_BASE_URL = "https://api.openai.com/v1"
LLM_BASE_URL = os.environ.get("SIGNAL_EVO_LLM_BASE_URL", DEFAULT_LLM_BASE_URL)
LLM_MODEL = os.environ.get("SIGNAL_EVO_LLM_MODEL")
LLM_API_KEY = os.environ.get("SIGNAL_EVO_LLM_API_KEY") or os.environ.get("OPENAI_API_KEY")
LLM_TEMPERATURE = float(os.environ.get("SIGNAL_EVO_LLM_TEMPERATURE", "0.7"))
LLM_TIMEOUT = 60.0
LLM_TRANSPORT_RETRIES = 3
LLM_BACKOFF_BASE = 0.5


def validate_remote_generator():
    """Check that a remote-generator run has what it needs.

    Re-reads the environment so callers that export variables after
    import still get a correct answer. Returns the resolved settings.
    """
    global LLM_BASE_URL, LLM_MODEL, LLM_API_KEY, LLM_TEMPERATURE

    LLM_BASE_URL = os.environ.get("SIGNAL_EVO_LLM_BASE_URL", DEFAULT_LLM_BASE_URL)
    LLM_MODEL = os.environ.get("SIGNAL_EVO_LLM_MODEL")
    LLM_API_KEY = os.environ.get("SIGNAL_EVO_LLM_API_KEY") or os.environ.get("OPENAI_API_KEY")
    try:
        LLM_TEMPERATURE = float(os.environ.get("SIGNAL_EVO_LLM_TEMPERATURE", "0.7"))
    except ValueError as exc:
        raise ConfigError(f"SIGNAL_EVO_LLM_TEMPERATURE is not a number: {exc}") from exc

    errors = []
    if not LLM_MODEL:
        errors.append("SIGNAL_EVO_LLM_MODEL must name the model to call")
    if not LLM_API_KEY:
        errors.append("SIGNAL_EVO_LLM_API_KEY (or OPENAI_API_KEY) must be set")
    if errors:
        raise ConfigError("Remote generator configuration errors:\n" + "\n".join(errors))

    return {
        "base_url": LLM_BASE_URL.rstrip("/"),
        "model": LLM_MODEL,
        "api_key": LLM_API_KEY,
        "temperature": LLM_TEMPERATURE,
        "timeout": LLM_TIMEOUT,
        "retries": LLM_TRANSPORT_RETRIES,
        "backoff": LLM_BACKOFF_BASE,
    }


__all__ = [
    "PROJECT_ROOT",
    "SCENARIO_DIR",
    "SKILL_BANK_DIR",
    "RUN_DIR",
    "LLM_BASE_URL",
    "LLM_MODEL",
    "LLM_API_KEY",
    "LLM_TEMPERATURE",
    "LLM_TIMEOUT",
    "LLM_TRANSPORT_RETRIES",
    "LLM_BACKOFF_BASE",
    "validate_remote_generator",
]
