"""HTTP facade over a frozen checkpoint for interactive latent-space
browsing.

All bodies are JSON; geometry responses come from the same decode path
as the CLI, so identical requests always yield identical bytes. The
checkpoint is never mutated, which makes concurrent handlers safe.
Status codes: 400 malformed body or wrong code length, 404 unknown
model, 409 condition mismatch.
"""

import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .corpus import corpus_bbox_diagonal
from .mesh import format_obj
from .ops import SessionGeometry, explore_grid, interpolate_latent

__all__ = ["create_app", "serve"]

log = logging.getLogger("shapespace.service")


class DecodeRequest(BaseModel):
    code: list[float]
    condition: list[str] | None = None
    vertices_only: bool = False
    format: str | None = None  # "obj" returns the mesh as OBJ text


class GridRequest(BaseModel):
    dims: list[int]
    base_code: list[float]
    range: list[float] = [-2.0, 2.0]
    resolution: int = 5
    condition: list[str] | None = None
    vertices_only: bool = True


class InterpolateRequest(BaseModel):
    a_code: list[float]
    b_code: list[float]
    steps: int = 10
    condition: list[str] | None = None
    vertices_only: bool = True


def _http_error(status, message):
    return JSONResponse(status_code=status, content={"detail": message})


def create_app(checkpoint, corpus, ui_dir=None):
    session = SessionGeometry(checkpoint, corpus.geometry)
    base = corpus.base_mesh
    faces = base.faces.tolist()
    counters = {}

    app = FastAPI(title="shapespace explorer service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc):  # noqa: ANN001
        return _http_error(400, f"malformed body: {exc.errors()[:1]}")

    def _bump(name):
        counters[name] = counters.get(name, 0) + 1

    def _checked_condition(condition):
        """Vocabulary indices, or an error response on mismatch."""
        if condition is None:
            if checkpoint.vocabularies:
                return None, _http_error(409, "model is conditional: provide "
                                              f"{len(checkpoint.vocabularies)} condition tokens")
            return None, None
        try:
            return checkpoint.condition_index(list(condition)), None
        except ValueError as exc:
            return None, _http_error(409, str(exc))

    def _mesh_payload(mesh, vertices_only):
        payload = {"vertices": mesh.vertices.tolist()}
        if not vertices_only:
            payload["faces"] = faces
        return payload

    @app.get("/api/info")
    def info():
        _bump("info")
        lo = base.vertices.min(axis=0).tolist()
        hi = base.vertices.max(axis=0).tolist()
        return {
            "latent_dim": checkpoint.latent_dim,
            "sigma_object": checkpoint.vae.prior_sigma.tolist(),
            "conditions": checkpoint.vocabularies,
            "corpus_size": corpus.size,
            "bbox": {"min": lo, "max": hi,
                     "diagonal": corpus_bbox_diagonal(corpus)},
            "n_vertices": base.n_vertices,
        }

    @app.get("/api/topology")
    def topology():
        _bump("topology")
        return {"n_vertices": base.n_vertices, "faces": faces}

    @app.post("/api/decode")
    def decode(req: DecodeRequest):
        _bump("decode")
        if len(req.code) != checkpoint.latent_dim:
            return _http_error(400, f"code length {len(req.code)}, expected "
                                    f"{checkpoint.latent_dim}")
        cond, err = _checked_condition(req.condition)
        if err is not None:
            return err
        mesh = session.decode(np.asarray(req.code, dtype=float), cond)
        if req.format == "obj":
            return {"obj": format_obj(mesh)}
        return _mesh_payload(mesh, req.vertices_only)

    @app.post("/api/grid")
    def grid(req: GridRequest):
        _bump("grid")
        if len(req.dims) != 2 or len(req.range) != 2:
            return _http_error(400, "dims and range must each have 2 entries")
        if len(req.base_code) != checkpoint.latent_dim:
            return _http_error(400, f"base code length {len(req.base_code)}, "
                                    f"expected {checkpoint.latent_dim}")
        cond, err = _checked_condition(req.condition)
        if err is not None:
            return err
        try:
            cells = explore_grid(checkpoint, session.geometry,
                                 (req.dims[0], req.dims[1]),
                                 np.asarray(req.base_code, dtype=float),
                                 (req.range[0], req.range[1]),
                                 req.resolution, cond)
        except ValueError as exc:
            return _http_error(400, str(exc))
        return {
            "resolution": req.resolution,
            "cells": [[_mesh_payload(m, req.vertices_only) for m in row]
                      for row in cells],
        }

    @app.post("/api/interpolate")
    def interpolate(req: InterpolateRequest):
        _bump("interpolate")
        for name, code in (("a_code", req.a_code), ("b_code", req.b_code)):
            if len(code) != checkpoint.latent_dim:
                return _http_error(400, f"{name} length {len(code)}, expected "
                                        f"{checkpoint.latent_dim}")
        if req.steps < 2:
            return _http_error(400, "steps must be at least 2")
        cond, err = _checked_condition(req.condition)
        if err is not None:
            return err
        frames = interpolate_latent(checkpoint, session.geometry,
                                    np.asarray(req.a_code, dtype=float),
                                    np.asarray(req.b_code, dtype=float),
                                    req.steps, cond)
        return {"frames": [_mesh_payload(m, req.vertices_only) for m in frames]}

    @app.get("/api/model/{k}")
    def model(k: int, vertices_only: bool = False):
        _bump("model")
        if not 0 <= k < corpus.size:
            return _http_error(404, f"no model {k} in a corpus of {corpus.size}")
        conds = corpus.condition_indices([k])
        cond = tuple(conds[0]) if conds is not None and checkpoint.vocabularies else None
        mu = session.posterior_mean(corpus.features[k], cond)
        payload = _mesh_payload(corpus.meshes[k], vertices_only)
        payload["mu"] = mu.tolist()
        payload["name"] = corpus.names[k]
        if corpus.labels:
            payload["labels"] = [fam[k] for fam in corpus.labels]
        return payload

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    app.state.counters = counters
    return app


def serve(checkpoint, corpus, host="127.0.0.1", port=8600, ui_dir=None):
    """Run the explorer service until interrupted."""
    import uvicorn

    app = create_app(checkpoint, corpus, ui_dir=ui_dir)
    log.info("serving on http://%s:%d (latent dim %d, %d models)",
             host, port, checkpoint.latent_dim, corpus.size)
    uvicorn.run(app, host=host, port=port, log_level="warning")
