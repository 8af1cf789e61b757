"""Minimal HTTP text-completion client.

Wire format: ``POST <endpoint>`` with JSON ``{prompt, max_tokens, temperature,
stop}``; the response is JSON with a ``text`` field.  An optional bearer
token is read from ``PRECOND_MODEL_TOKEN``.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import requests

log = logging.getLogger(__name__)

TOKEN_ENV = "PRECOND_MODEL_TOKEN"
ENDPOINT_ENV = "PRECOND_MODEL_ENDPOINT"


class ModelError(RuntimeError):
    pass


@dataclass
class CompletionClient:
    endpoint: str
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 0.5
    token: str | None = None

    def __post_init__(self):
        if not self.endpoint:
            raise ModelError("model endpoint is not configured")
        if self.token is None:
            self.token = os.environ.get(TOKEN_ENV)

    def complete(self, prompt: str, max_tokens: int = 64, temperature: float = 0.0, stop=("\n",)) -> str:
        payload = {"prompt": prompt, "max_tokens": max_tokens, "temperature": temperature, "stop": list(stop)}
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        last = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                data = resp.json()
                if not isinstance(data, dict) or "text" not in data:
                    raise ModelError(f"response has no 'text' field: {data!r}")
                return str(data["text"])
            except (requests.RequestException, ValueError) as exc:
                last = exc
                log.warning("completion request failed (attempt %d/%d): %s", attempt + 1, self.retries, exc)
                time.sleep(self.backoff * (2**attempt))
        raise ModelError(f"endpoint {self.endpoint} failed after {self.retries} attempts: {last}")
