"""FastAPI application exposing the generation wire contract.

Endpoints (bit-compatible with the pipeline's backend clients):
  POST /generate  {inputs: [string], num_beams, max_new_tokens, stop?}
                  -> {outputs: [string], meta: {...}}
  POST /complete  {prompt, max_tokens, temperature, stop: [string]}
                  -> {choices: [{text}]}
  GET  /health    -> {status, model}

Malformed or invalid request bodies answer 400 with an error body.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engine import GenerationEngine


class GenerateRequest(BaseModel):
    inputs: list[str] = Field(min_length=1)
    num_beams: int = Field(default=5, ge=1)
    max_new_tokens: int = Field(default=256, ge=1)
    stop: Optional[str] = None


class CompleteRequest(BaseModel):
    prompt: str = Field(min_length=1)
    max_tokens: int = Field(default=256, ge=1)
    temperature: float = Field(default=0.0, ge=0.0)
    stop: Optional[list[str]] = None


def create_app(engine: GenerationEngine) -> FastAPI:
    app = FastAPI(title="fusion-server")

    @app.exception_handler(RequestValidationError)
    async def on_invalid(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.get("/health")
    def health():
        return {"status": "ok", "model": engine.identity}

    @app.post("/generate")
    def generate(request: GenerateRequest):
        outputs = engine.generate(
            request.inputs,
            num_beams=request.num_beams,
            max_new_tokens=request.max_new_tokens,
            stop=request.stop,
        )
        return {
            "outputs": outputs,
            "meta": {
                "model": engine.identity,
                "num_beams": request.num_beams,
                "max_new_tokens": request.max_new_tokens,
            },
        }

    @app.post("/complete")
    def complete(request: CompleteRequest):
        stop = request.stop[0] if request.stop else None
        # temperature 0 maps to greedy decoding; sampling is not served
        outputs = engine.generate(
            [request.prompt], num_beams=1, max_new_tokens=request.max_tokens, stop=stop
        )
        return {"choices": [{"text": outputs[0]}]}

    return app
