"""Chat-completion client with retries and an on-disk response cache."""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

log = logging.getLogger(__name__)


class ChatError(RuntimeError):
    pass


@dataclass
class EndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4-turbo"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 120.0
    max_in_flight: int = 4
    retry_limit: int = 3
    backoff_base: float = 1.0
    cache_dir: str = "cache"

    def __post_init__(self):
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


def cache_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ChatClient:
    """Temperature-0 chat completions, cached by prompt hash.

    ``transport`` and ``sleep`` exist so tests can stub the network and clock.
    """

    def __init__(
        self,
        cfg: EndpointConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self.sleep = sleep
        self.network_calls = 0
        self._http = httpx.Client(base_url=cfg.base_url, timeout=cfg.timeout, transport=transport)

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _cache_path(self, prompt: str) -> Path:
        return Path(self.cfg.cache_dir) / f"{cache_key(prompt)}.txt"

    def _store(self, prompt: str, text: str) -> None:
        path = self._cache_path(prompt)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)

    def _request(self, prompt: str) -> str:
        key = os.environ.get(self.cfg.api_key_env)
        if not key:
            raise ChatError(f"environment variable {self.cfg.api_key_env} is not set")
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        self.network_calls += 1
        resp = self._http.post("/chat/completions", json=payload, headers={"Authorization": f"Bearer {key}"})
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def complete(self, prompt: str) -> str:
        path = self._cache_path(prompt)
        if path.exists():
            return path.read_text(encoding="utf-8")
        last: Exception | None = None
        for attempt in range(self.cfg.retry_limit + 1):
            if attempt:
                delay = self.cfg.backoff_base * 2 ** (attempt - 1)
                log.warning("chat request failed (%s); retry %d in %.1fs", last, attempt, delay)
                self.sleep(delay)
            try:
                text = self._request(prompt)
            except (httpx.TimeoutException, httpx.TransportError, httpx.HTTPStatusError, KeyError, ValueError) as exc:
                last = exc
                continue
            self._store(prompt, text)
            return text
        raise ChatError(f"chat completion failed after {self.cfg.retry_limit + 1} attempts: {last}")

    def complete_many(self, prompts: Sequence[str]) -> list[str]:
        with ThreadPoolExecutor(max_workers=self.cfg.max_in_flight) as pool:
            return list(pool.map(self.complete, prompts))


def chat_complete(cfg: EndpointConfig, prompt: str, transport: httpx.BaseTransport | None = None) -> str:
    with ChatClient(cfg, transport=transport) as client:
        return client.complete(prompt)
