"""Adapter for an external chat-completions endpoint."""

from __future__ import annotations

import logging
import time

import requests

from ..runtime import SYSTEM_PROMPT, BeliefState, ParseError, parse_action
from .base import PolicyOutput

log = logging.getLogger(__name__)


class ExternalEndpointError(RuntimeError):
    pass


def render_messages(state: BeliefState) -> list[dict]:
    msgs = [{"role": "system", "content": SYSTEM_PROMPT}]
    msgs += [{"role": item.role, "content": item.content} for item in state.h_t]
    return msgs


class ChatPolicy:
    """Sends the running transcript to ``endpoint`` and returns the raw reply.

    Transport failures, non-2xx replies and malformed bodies are retried up
    to ``max_attempts`` times with exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        model: str = "default",
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        temperature: float = 0.0,
        session: requests.Session | None = None,
        name: str = "chat",
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.temperature = temperature
        self.session = session or requests.Session()
        self.name = name

    def _request(self, payload: dict) -> str:
        last = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(self.endpoint, json=payload, timeout=self.timeout)
                resp.raise_for_status()
                content = resp.json()["choices"][0]["message"]["content"]
                if not isinstance(content, str):
                    raise TypeError("message content is not a string")
                return content
            except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as exc:
                last = exc
                log.warning("chat endpoint attempt %d/%d failed: %s", attempt + 1, self.max_attempts, exc)
        raise ExternalEndpointError(
            f"{self.endpoint}: giving up after {self.max_attempts} attempts: {last}"
        )

    def act(self, state: BeliefState, seed: int) -> PolicyOutput:
        payload = {
            "model": self.model,
            "messages": render_messages(state),
            "temperature": self.temperature,
            "seed": seed,
        }
        text = self._request(payload)
        try:
            trace = parse_action(text)
        except ParseError:
            trace = None
        return PolicyOutput(round_text=text, action_trace=trace)
