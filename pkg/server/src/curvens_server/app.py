"""FastAPI application exposing the wire protocol.

Endpoints: GET /v1/models, POST /v1/logprob, POST /v1/fill, POST /v1/generate.
Every error is a JSON body of the shape {"error": "<message>"}.
"""
from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backends import BackendError, LoadedModel
from .config import ServerConfig


class LogProbRequest(BaseModel):
    model: str
    texts: list[str]


class FillRequest(BaseModel):
    model: str
    masked_text: str
    span_lengths: list[int]
    seed: int = 0


class GenerateRequest(BaseModel):
    model: str
    prompt: str
    max_tokens: int
    temperature: float = 1.0
    seed: int = 0


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(config: ServerConfig) -> FastAPI:
    app = FastAPI(title="curvens model server")
    models: dict[str, LoadedModel] = {}
    for name, entry in config.models.items():
        models[name] = LoadedModel(name, entry, device=config.device,
                                   max_batch=config.max_batch)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error(400, f"invalid request body: {exc.errors()[0].get('msg', exc)}")

    @app.exception_handler(BackendError)
    async def on_backend_error(request: Request, exc: BackendError):
        return _error(exc.status, exc.message)

    def resolve(name: str) -> LoadedModel:
        if name not in models:
            raise BackendError(404, f"unknown model: {name}")
        return models[name]

    @app.get("/v1/models")
    def list_models():
        return {"models": [
            {"name": m.name, "kind": m.kind, "parameters": m.parameters}
            for m in models.values()
        ]}

    @app.post("/v1/logprob")
    def logprob(body: LogProbRequest):
        model = resolve(body.model)
        if not body.texts or any(not t.strip() for t in body.texts):
            raise BackendError(400, "texts must be non-empty")
        logprobs, counts = [], []
        for text in body.texts:
            lp, count = model.logprob(text)
            if not math.isfinite(lp):
                raise BackendError(500, f"non-finite log-probability for {model.name}")
            logprobs.append(lp)
            counts.append(count)
        return {"logprobs": logprobs, "token_counts": counts}

    @app.post("/v1/fill")
    def fill(body: FillRequest):
        model = resolve(body.model)
        return {"filled_text": model.fill(body.masked_text, body.span_lengths,
                                          body.seed)}

    @app.post("/v1/generate")
    def generate(body: GenerateRequest):
        model = resolve(body.model)
        if body.temperature <= 0:
            raise BackendError(400, "temperature must be > 0")
        if body.max_tokens < 1:
            raise BackendError(400, "max_tokens must be >= 1")
        return {"text": model.generate(body.prompt, body.max_tokens,
                                       body.temperature, body.seed)}

    return app
