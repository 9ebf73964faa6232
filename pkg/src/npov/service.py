"""HTTP facade over one loaded neutralizer.

The model is loaded once and never mutated; identical requests produce
identical bodies. Control vectors align to the token array returned by
/api/detect, which is the server-side tokenization contract.
"""

from __future__ import annotations

import hashlib
import os
import time
import uuid

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .evaluation import sentence_of
from .persist import load_artifact
from .systems import MERGE_RULES, ControlVector
from .text import token_diff, tokenize

MODEL_ENV = "NEUTRALIZE_MODEL"


class DetectIn(BaseModel):
    text: str
    category: str = "unknown"


class NeutralizeIn(BaseModel):
    text: str
    category: str = "unknown"
    control: list[float] | None = None
    merge: str = "replace"


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message})


def create_app(model_path: str | None = None) -> FastAPI:
    path = model_path or os.environ.get(MODEL_ENV)
    if not path:
        raise ValueError(
            f"no model path given; pass one or set {MODEL_ENV}")
    artifact = load_artifact(path)
    if artifact.kind not in ("modular", "concurrent"):
        raise ValueError(
            f"cannot serve a {artifact.kind!r} artifact; need a full system")
    system = artifact.model
    with open(path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()

    app = FastAPI(title="neutralize-service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    session = {"id": str(uuid.uuid4()), "log": []}
    app.state.session = session

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request, exc):
        return _error(400, "bad-request", str(exc.errors()[:3]))

    def log(endpoint: str, **payload) -> None:
        session["log"].append({"ts": time.time(), "endpoint": endpoint,
                               **payload})

    @app.get("/api/health")
    def health():
        return {"status": "ok", "model": digest}

    @app.get("/api/model-info")
    def model_info():
        return {
            "kind": artifact.kind,
            "model": digest,
            "vocab_size": len(artifact.vocab),
            "categories": artifact.vocab.categories,
            "beam_width": artifact.run.beam_width,
            "alpha": artifact.run.alpha,
            "merge_rules": list(MERGE_RULES),
            "session": session["id"],
            "requests": len(session["log"]),
        }

    @app.post("/api/detect")
    def detect(body: DetectIn):
        if artifact.kind != "modular":
            return _error(400, "unsupported-operation",
                          "this model has no detection stage")
        try:
            sent = tokenize(body.text)
        except ValueError as err:
            return _error(400, "invalid-text", str(err))
        probs = system.detector.detect(sent, body.category)
        log("detect", text=body.text, category=body.category)
        return {"tokens": sent.surfaces,
                "probabilities": [float(p) for p in probs]}

    @app.post("/api/neutralize")
    def neutralize(body: NeutralizeIn):
        try:
            sent = tokenize(body.text)
        except ValueError as err:
            return _error(400, "invalid-text", str(err))
        control = None
        if body.control is not None:
            try:
                control = ControlVector(tuple(body.control), merge=body.merge)
            except ValueError as err:
                return _error(400, "invalid-control", str(err))
        try:
            result = system.neutralize(sent.norms, body.category,
                                       control=control,
                                       width=artifact.run.beam_width)
        except ValueError as err:
            return _error(400, "invalid-control", str(err))
        script = token_diff(sent, sentence_of(result.output_tokens))
        spans = [[t0, t1] for kind, _, (t0, t1) in script.ops
                 if kind != "equal"]
        probs = ([float(p) for p in result.p_used]
                 if result.p_used is not None else [])
        log("neutralize", text=body.text, category=body.category,
            control=body.control, merge=body.merge)
        return {
            "tokens": sent.surfaces,
            "probabilities": probs,
            "output_tokens": result.output_tokens,
            "output_text": " ".join(result.output_tokens),
            "changed_spans": spans,
        }

    return app
