import numpy as np
import pytest
from fastapi.testclient import TestClient

from npov.config import RunConfig
from npov.detector import Lexicon
from npov.persist import (
    build_concurrent,
    build_detector,
    build_editor,
    save_artifact,
)
from npov.service import MODEL_ENV, create_app
from npov.systems import ModularSystem
from npov.vocab import Vocabulary

RUN = RunConfig(hidden=16, ctx_dim=16, emb_dim=16, feat_hidden=8,
                n_layers=1, max_len=32, beam_width=2, seed=3)

SENTS = [
    ["he", "clearly", "stole", "the", "money"],
    ["she", "wrote", "a", "good", "book"],
    ["they", "walked", "to", "the", "station"],
]


def make_vocab():
    return Vocabulary.build(SENTS, categories=["history", "science"], cap=200)


def make_lexicons():
    return [Lexicon("strong", frozenset({"clearly", "stole"})),
            Lexicon("weak", frozenset({"good"}))]


@pytest.fixture(scope="module")
def modular_path(tmp_path_factory):
    vocab = make_vocab()
    system = ModularSystem(build_detector(RUN, vocab, make_lexicons()),
                           build_editor(RUN, vocab))
    path = tmp_path_factory.mktemp("svc") / "modular.npz"
    save_artifact(path, "modular", system, RUN, vocab, make_lexicons())
    return str(path)


@pytest.fixture(scope="module")
def concurrent_path(tmp_path_factory):
    run = RUN.replace(mode="concurrent")
    vocab = make_vocab()
    system = build_concurrent(run, vocab)
    path = tmp_path_factory.mktemp("svc") / "concurrent.npz"
    save_artifact(path, "concurrent", system, run, vocab)
    return str(path)


@pytest.fixture(scope="module")
def client(modular_path):
    return TestClient(create_app(modular_path))


def test_health_reports_model_digest(client, modular_path):
    resp = client.get("/api/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert len(body["model"]) == 64
    assert all(c in "0123456789abcdef" for c in body["model"])


def test_model_info_contents(client):
    body = client.get("/api/model-info").json()
    assert body["kind"] == "modular"
    assert body["beam_width"] == 2
    assert body["merge_rules"] == ["replace", "max"]
    assert set(body["categories"]) == {"history", "science", "unknown"}
    assert body["vocab_size"] > 0
    assert isinstance(body["requests"], int)


def test_detect_aligned_arrays(client):
    resp = client.post("/api/detect",
                       json={"text": "He clearly stole the money"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["tokens"] == ["He", "clearly", "stole", "the", "money"]
    assert len(body["probabilities"]) == 5
    assert all(0.0 <= p <= 1.0 for p in body["probabilities"])


def test_detect_is_deterministic(client):
    payload = {"text": "she wrote a good book", "category": "history"}
    a = client.post("/api/detect", json=payload).json()
    b = client.post("/api/detect", json=payload).json()
    assert a == b


def test_neutralize_full_schema(client):
    resp = client.post("/api/neutralize",
                       json={"text": "he clearly stole the money"})
    assert resp.status_code == 200
    body = resp.json()
    assert set(body) == {"tokens", "probabilities", "output_tokens",
                         "output_text", "changed_spans"}
    assert len(body["probabilities"]) == len(body["tokens"])
    assert body["output_text"] == " ".join(body["output_tokens"])
    for span in body["changed_spans"]:
        t0, t1 = span
        assert 0 <= t0 <= t1 <= len(body["output_tokens"])


def test_neutralize_is_deterministic(client):
    payload = {"text": "he clearly stole the money", "category": "science"}
    a = client.post("/api/neutralize", json=payload).json()
    b = client.post("/api/neutralize", json=payload).json()
    assert a == b


def test_neutralize_accepts_control(client):
    det = client.post("/api/detect",
                      json={"text": "she wrote a good book"}).json()
    control = [0.0] * len(det["tokens"])
    resp = client.post("/api/neutralize",
                       json={"text": "she wrote a good book",
                             "control": control, "merge": "replace"})
    assert resp.status_code == 200
    assert resp.json()["probabilities"] == control


def test_max_merge_keeps_detector_floor(client):
    text = "he clearly stole the money"
    det = client.post("/api/detect", json={"text": text}).json()
    control = [0.0] * len(det["tokens"])
    body = client.post("/api/neutralize",
                       json={"text": text, "control": control,
                             "merge": "max"}).json()
    assert np.allclose(body["probabilities"], det["probabilities"],
                       atol=1e-6)


def test_wrong_length_control_rejected(client):
    resp = client.post("/api/neutralize",
                       json={"text": "she wrote a good book",
                             "control": [1.0, 0.0]})
    assert resp.status_code == 400
    body = resp.json()
    assert body["code"] == "invalid-control"
    assert "message" in body


def test_out_of_range_control_rejected(client):
    resp = client.post("/api/neutralize",
                       json={"text": "she wrote a good book",
                             "control": [2.0, 0, 0, 0, 0]})
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid-control"


def test_bad_merge_rejected(client):
    resp = client.post("/api/neutralize",
                       json={"text": "she wrote a good book",
                             "control": [0, 0, 0, 0, 0],
                             "merge": "average"})
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid-control"


def test_empty_text_rejected(client):
    for endpoint in ("/api/detect", "/api/neutralize"):
        resp = client.post(endpoint, json={"text": "   "})
        assert resp.status_code == 400
        assert resp.json()["code"] == "invalid-text"


def test_malformed_body_is_clean_400(client):
    resp = client.post("/api/neutralize", json={"control": [1, 2]})
    assert resp.status_code == 400
    body = resp.json()
    assert body["code"] == "bad-request"
    assert "message" in body
    assert "Traceback" not in body["message"]

    resp = client.post("/api/detect", content=b"not json at all",
                       headers={"content-type": "application/json"})
    assert resp.status_code == 400
    assert resp.json()["code"] == "bad-request"


def test_cors_headers_present(client):
    resp = client.get("/api/health", headers={"Origin": "http://x.test"})
    assert resp.headers.get("access-control-allow-origin") == "*"


def test_request_log_grows(client):
    before = client.get("/api/model-info").json()["requests"]
    client.post("/api/detect", json={"text": "they walked to the station"})
    after = client.get("/api/model-info").json()["requests"]
    assert after == before + 1


def test_concurrent_model_serves_neutralize_only(concurrent_path):
    cclient = TestClient(create_app(concurrent_path))
    resp = cclient.post("/api/detect", json={"text": "she wrote a book"})
    assert resp.status_code == 400
    assert resp.json()["code"] == "unsupported-operation"

    resp = cclient.post("/api/neutralize",
                        json={"text": "she wrote a good book"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["probabilities"] == []
    assert body["output_tokens"]

    resp = cclient.post("/api/neutralize",
                        json={"text": "she wrote a good book",
                              "control": [0, 0, 0, 0, 0]})
    assert resp.status_code == 400


def test_env_var_fallback(modular_path, monkeypatch):
    monkeypatch.delenv(MODEL_ENV, raising=False)
    with pytest.raises(ValueError, match=MODEL_ENV):
        create_app()
    monkeypatch.setenv(MODEL_ENV, modular_path)
    app = create_app()
    assert TestClient(app).get("/api/health").json()["status"] == "ok"


def test_wrong_kind_refused(tmp_path):
    vocab = make_vocab()
    det = build_detector(RUN, vocab, make_lexicons())
    path = tmp_path / "det.npz"
    save_artifact(path, "detector", det, RUN, vocab, make_lexicons())
    with pytest.raises(ValueError, match="full system"):
        create_app(str(path))
