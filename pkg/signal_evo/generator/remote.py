"""OpenAI-compatible chat-completions backend."""
from __future__ import annotations

import time
from typing import Any, Callable, Optional

import requests

from ..errors import GeneratorUnavailable
from ..logs import get_logger
from .prompts import PromptBundle

logger = get_logger(__name__)

RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


class RemoteBackend:
    """One POST to ``<base_url>/chat/completions`` per draft.

    Transport errors and HTTP 429/5xx are retried ``retries`` times with
    ``backoff * 2**k`` second pauses; any other HTTP error, a malformed
    body or exhausted retries raise `GeneratorUnavailable`.
    """

    kind = "remote"
    deterministic = False

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str,
        temperature: float = 0.7,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self.sleep = sleep

    @classmethod
    def from_env(cls, **overrides: Any) -> "RemoteBackend":
        from ..config import settings

        cfg = settings.validate_remote_generator()
        return cls(
            cfg["base_url"],
            cfg["model"],
            cfg["api_key"],
            temperature=cfg["temperature"],
            timeout=cfg["timeout"],
            retries=cfg["retries"],
            backoff=cfg["backoff"],
            **overrides,
        )

    def _payload(self, prompts: PromptBundle) -> dict:
        return {"model": self.model, "messages": prompts.messages(), "temperature": self.temperature}

    def complete(self, prompts: PromptBundle, request: Any = None) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        last = "no attempt made"
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.warning("generator request failed (%s); retry %d/%d in %.1fs", last, attempt, self.retries, delay)
                self.sleep(delay)
            try:
                resp = self.session.post(self.url, headers=headers, json=self._payload(prompts), timeout=self.timeout)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise GeneratorUnavailable(f"generator endpoint {self.url} answered HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GeneratorUnavailable(f"malformed chat-completions response from {self.url}: {exc}") from exc
        raise GeneratorUnavailable(f"generator endpoint {self.url} unavailable after {self.retries} retries: {last}")


__all__ = ["RETRY_STATUS", "RemoteBackend"]
