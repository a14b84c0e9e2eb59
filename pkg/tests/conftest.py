import json

import httpx
import pytest

from siftrank.types import Document


def make_corpus(n, prefix="d"):
    """n documents whose ids encode the ground-truth order (0 = best)."""
    return [Document(f"{prefix}{i:04d}", f"text for {prefix}{i:04d}", i) for i in range(n)]


def truth_ids(corpus):
    return [doc.id for doc in corpus]


def extract_prompt_entries(request: httpx.Request) -> dict:
    """Pull the keyed item dictionary back out of a chat-completions call."""
    payload = json.loads(request.content)
    user = payload["messages"][-1]["content"]
    blob = user.split("Items:\n", 1)[1].rsplit("\n\n", 1)[0]
    return json.loads(blob)


def chat_response(content, prompt_tokens=10, completion_tokens=5, status_code=200):
    return httpx.Response(
        status_code=status_code,
        json={
            "choices": [{"message": {"content": content}}],
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
            },
        },
    )


def make_chat_transport(reply):
    """MockTransport whose handler sees (request, prompt entry dict).

    ``reply`` returns either response text or a full httpx.Response.
    """

    def handler(request: httpx.Request) -> httpx.Response:
        try:
            entries = extract_prompt_entries(request)
        except (IndexError, ValueError):
            entries = {}
        result = reply(request, entries)
        if isinstance(result, httpx.Response):
            return result
        return chat_response(result)

    return httpx.MockTransport(handler)


@pytest.fixture
def api_key_env(monkeypatch):
    monkeypatch.setenv("TEST_RANKER_KEY", "secret-token")
    return "TEST_RANKER_KEY"
