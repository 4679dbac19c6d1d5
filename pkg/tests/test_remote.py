"""The HTTP wire protocol, exercised against an in-process toy server."""

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
import requests

from shortendoc.backend import BackendError, RemoteBackend
from shortendoc.compressor import CompressionError, shortendoc_compress
from shortendoc.core import CompressionConfig, Prompt
from shortendoc.importance import loo_importance
from shortendoc.server import serve_in_thread

from conftest import random_toy


@pytest.fixture
def toy_server():
    toy = random_toy(11)
    srv = serve_in_thread(toy)
    yield toy, srv
    srv.shutdown()
    srv.server_close()


def test_endpoints_match_local_toy(toy_server):
    toy, srv = toy_server
    remote = RemoteBackend(srv.url, timeout=5)
    text = "return the sum of sorted values"
    toks = remote.tokenize(text)
    assert toks == toy.tokenize(text)
    assert remote.detokenize(toks) == text
    assert remote.token_logprobs(toks) == pytest.approx(toy.token_logprobs(toks), abs=1e-12)
    np.testing.assert_allclose(remote.next_token_logits(toks), toy.next_token_logits(toks), atol=1e-12)
    np.testing.assert_allclose(remote.doc_embedding(toks), toy.doc_embedding(toks), atol=1e-12)


def test_requests_carry_ids_not_text(toy_server):
    _, srv = toy_server
    toks = RemoteBackend(srv.url).tokenize("the sum")
    body = requests.post(f"{srv.url}/v1/logprobs", json={"ids": list(toks.ids)}, timeout=5).json()
    assert set(body) == {"logprobs"} and len(body["logprobs"]) == 2
    body = requests.post(f"{srv.url}/v1/logits", json={"ids": []}, timeout=5).json()
    assert len(body["logits"]) == len(random_toy(11).vocab)


def test_remote_determinism_and_concurrency(toy_server):
    _, srv = toy_server
    remote = RemoteBackend(srv.url, timeout=5)
    toks = remote.tokenize("return the sum of a list if empty zero")
    first = remote.token_logprobs(toks)
    assert remote.token_logprobs(toks) == first
    serial = loo_importance(remote, toks)
    with ThreadPoolExecutor(4) as pool:
        parallel = loo_importance(remote, toks, executor=pool)
    assert parallel == serial


def test_compress_over_the_wire_matches_local(toy_server):
    toy, srv = toy_server
    remote = RemoteBackend(srv.url, timeout=5)
    prompt = Prompt("t", "def f(xs):", "return the sum of sorted values if empty zero")
    cfg = CompressionConfig(tau=0.95)
    assert shortendoc_compress(prompt, remote, cfg).to_dict() == shortendoc_compress(prompt, toy, cfg).to_dict()


class _BadHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length") or 0))
        if self.path.endswith("tokenize"):
            status, body = 200, {"ids": [1, 2], "surfaces": ["a"]}
        elif self.path.endswith("logprobs"):
            status, body = 200, {"logprobs": "nope"}
        elif self.path.endswith("logits"):
            status, body = 500, {"error": "boom"}
        else:
            status, body = 200, {"wrong": []}
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def bad_server():
    srv = ThreadingHTTPServer(("127.0.0.1", 0), _BadHandler)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    yield f"http://127.0.0.1:{srv.server_address[1]}"
    srv.shutdown()
    srv.server_close()


def test_schema_violations_name_the_endpoint(bad_server):
    from shortendoc.core import TokenSeq

    remote = RemoteBackend(bad_server, timeout=5, retries=0)
    toks = TokenSeq((1,), ("a",))
    for call, endpoint in ((lambda: remote.tokenize("x"), "tokenize"),
                           (lambda: remote.token_logprobs(toks), "logprobs"),
                           (lambda: remote.next_token_logits(toks), "logits"),
                           (lambda: remote.doc_embedding(toks), "embed"),
                           (lambda: remote.detokenize(toks), "detokenize")):
        with pytest.raises(BackendError) as info:
            call()
        assert info.value.endpoint == endpoint


def test_unreachable_server():
    remote = RemoteBackend("http://127.0.0.1:9", timeout=1, retries=0)
    with pytest.raises(BackendError):
        remote.check()
    with pytest.raises(CompressionError) as info:
        shortendoc_compress(Prompt("t", "def f():", "doc text"), remote)
    assert info.value.stage == "tokenize"
