"""Minimal client for chat-completion style HTTP endpoints."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import httpx

from lerl.errors import ConfigError, LerlError


class TransportError(LerlError):
    """The endpoint could not be reached or answered with an unusable payload."""


@dataclass
class ChatClient:
    endpoint: str
    model: str
    timeout: float = 30.0
    temperature: float = 0.2
    api_key_env: str | None = None
    transport: httpx.BaseTransport | None = None

    def build_request(self, messages: Sequence[tuple[str, str]]) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": role, "content": content} for role, content in messages],
        }

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ConfigError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, messages: Sequence[tuple[str, str]]) -> str:
        payload = self.build_request(messages)
        headers = self._headers()
        try:
            with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
                resp = client.post(self.endpoint, json=payload, headers=headers)
                resp.raise_for_status()
                body = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise TransportError(f"chat request failed: {exc}") from exc
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("response has no choices[0].message.content") from exc
        if not isinstance(content, str):
            raise TransportError("message content is not text")
        return content
