"""HTTP authoring facade over gallery search and guided rollout.

The app loads the model and gallery once at startup; requests share that
immutable state and never mutate it, so identical requests always return
identical bodies regardless of ordering or concurrency.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import gallery as gal
from .clip import from_heading_frame
from .network import load_model
from .rollout import (GuidanceTooShort, RolloutStart, TargetPose,
                      guidance_from_chain, rollout)
from .skeleton import standard_skeleton

POSE_WIRE_VERSION = 1

MIN_QUERY_DISTANCE = 0.1
MAX_QUERY_DISTANCE = 10.0


class Marker(BaseModel):
    pos: list[float] = Field(min_length=2, max_length=2)
    facing: list[float] = Field(min_length=2, max_length=2)


class QueryBody(BaseModel):
    start: Marker
    target: Marker
    style: int | None = None
    duration_label: str | None = None
    count: int = 7
    seed: int = 0


class PoseFrame(BaseModel):
    """Wire pose: root position, ground facing, per-joint quaternions."""

    version: int = POSE_WIRE_VERSION
    root_pos: list[float] = Field(min_length=3, max_length=3)
    root_facing: list[float] = Field(min_length=2, max_length=2)
    rotations: list[list[float]]


class InbetweenBody(BaseModel):
    start: PoseFrame
    target: PoseFrame
    chain: list[list[int]]
    style: int = 0


def _unit(v: list[float]) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    n = np.linalg.norm(arr)
    if not np.isfinite(n) or n < 1e-9:
        raise ValueError("direction must be a finite nonzero vector")
    return arr / n


def create_app(model_path: str | Path, gallery_path: str | Path,
               static_dir: str | Path | None = None) -> FastAPI:
    model, model_meta = load_model(model_path)
    gallery = gal.load_gallery(gallery_path)
    skeleton = standard_skeleton()
    traj_index = {t.key: i for i, t in enumerate(gallery.trajectories)}

    app = FastAPI(title="tweenkit authoring service")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"error": "malformed body",
                                     "detail": exc.errors()})

    @app.get("/api/meta")
    def meta():
        return {
            "styles": list(range(model.config.dims.n_styles)),
            "model_version": model_meta.get("version"),
            "n_experts": model.config.n_experts,
            "gallery": {
                "trajectories": gallery.size,
                "clips": len(gallery.track_pos),
                "alpha": gallery.config.alpha,
            },
            "pose_wire_version": POSE_WIRE_VERSION,
            "skeleton": {
                "names": skeleton.names,
                "parents": [int(p) for p in skeleton.parents],
            },
        }

    @app.post("/api/gallery/query")
    def gallery_query(body: QueryBody):
        try:
            start_pos = np.asarray(body.start.pos, dtype=float)
            start_dir = _unit(body.start.facing)
            end_pos = np.asarray(body.target.pos, dtype=float)
            end_dir = _unit(body.target.facing)
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        if body.duration_label is not None and \
                body.duration_label not in gal.DURATION_LABELS:
            return JSONResponse(
                status_code=400,
                content={"error": f"unknown duration label "
                                  f"{body.duration_label!r}"})
        q = gal.Query.from_world(start_pos, start_dir, end_pos, end_dir)
        if not MIN_QUERY_DISTANCE <= q.distance <= MAX_QUERY_DISTANCE:
            return JSONResponse(
                status_code=422,
                content={"error": f"query distance {q.distance:.3f} m outside "
                                  f"[{MIN_QUERY_DISTANCE}, {MAX_QUERY_DISTANCE}]"})
        cfg = replace(gallery.config, seed=body.seed)
        cands = gal.query_candidates(gallery, q, cfg, count=body.count,
                                     style=body.style,
                                     duration_label=body.duration_label)
        out = []
        for c in cands:
            rel_pos, _ = gal.materialize(gallery, c.segments)
            world = start_pos + from_heading_frame(rel_pos, start_dir)
            out.append({
                "ids": [list(s.traj.key) for s in c.segments],
                "duration": c.duration,
                "label": c.label,
                "error": float(c.error),
                "polyline": [[float(p[0]), float(p[1])] for p in world],
            })
        return {"candidates": out}

    @app.post("/api/inbetween")
    def inbetween(body: InbetweenBody):
        segments = []
        for key in body.chain:
            idx = traj_index.get(tuple(key))
            if idx is None:
                return JSONResponse(
                    status_code=404,
                    content={"error": f"unknown candidate id {key}"})
            segments.append(gallery.trajectories[idx])
        try:
            start_pose = _decode_pose(body.start, skeleton)
            target_pose = _decode_pose(body.target, skeleton)
        except ValueError as exc:
            return JSONResponse(status_code=422, content={"error": str(exc)})
        start_dir = _unit(body.start.root_facing)
        start_pos2 = np.asarray(body.start.root_pos, dtype=float)[[0, 2]]
        # re-run the deterministic alignment for this chain against the
        # requested endpoints
        end_pos2 = np.asarray(body.target.root_pos, dtype=float)[[0, 2]]
        q = gal.Query.from_world(start_pos2, start_dir, end_pos2,
                                 _unit(body.target.root_facing))
        chain = _align_chain(segments, q)
        guidance = guidance_from_chain(gallery, chain, start_pos2, start_dir)
        start = RolloutStart.from_pose(start_pose[0], start_pose[1],
                                       model.config.dims.phase_channels)
        target = TargetPose(target_pose[0], target_pose[1])
        if not 0 <= body.style < model.config.dims.n_styles:
            return JSONResponse(status_code=422,
                                content={"error": f"style {body.style} unknown"})
        try:
            clip = rollout(model, start, target, guidance, style_id=body.style,
                           skeleton=skeleton)
        except GuidanceTooShort as exc:
            return JSONResponse(status_code=422, content={"error": str(exc)})
        frames = []
        for i in range(clip.n_frames):
            frames.append({
                "root_pos": [float(v) for v in clip.root_pos[i]],
                "rotations": [[float(v) for v in quat]
                              for quat in clip.rotations[i]],
                # world joint positions so clients can draw without any
                # kinematic computation of their own
                "world_pos": [[float(v) for v in p]
                              for p in clip.world_pos[i]],
            })
        return {"tta0": guidance.tta0, "frames": frames,
                "pose_wire_version": POSE_WIRE_VERSION}

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")

    return app


def _decode_pose(frame: PoseFrame, skeleton) -> tuple[np.ndarray, np.ndarray]:
    """(world joint positions, local rotations) from a wire pose."""
    if frame.version != POSE_WIRE_VERSION:
        raise ValueError(f"unsupported pose wire version {frame.version}")
    j = skeleton.n_joints
    rots = np.asarray(frame.rotations, dtype=float)
    if rots.shape != (j, 4):
        raise ValueError(f"rotations must be {j}x4 quaternions")
    norms = np.linalg.norm(rots, axis=1)
    if not np.all(np.isfinite(rots)) or np.any(norms < 1e-6):
        raise ValueError("rotations must be finite nonzero quaternions")
    rots = rots / norms[:, None]
    root = np.asarray(frame.root_pos, dtype=float)
    if not np.all(np.isfinite(root)):
        raise ValueError("root position must be finite")
    from .rollout import _fk_pose

    world_pos = _fk_pose(skeleton, root, rots)
    return world_pos, rots


def _align_chain(trajs: list[gal.AtomicTrajectory],
                 q: gal.Query) -> list[gal.ChainSegment]:
    """Align a stored chain onto a query, mirroring the search geometry."""
    from . import rotmath

    segments: list[gal.ChainSegment] = []
    v_remaining = q.v_disp.copy()
    delta = 0.0
    for t in trajs:
        if np.linalg.norm(v_remaining) > 1e-9 and t.distance > 1e-9:
            delta = rotmath.signed_angle2d(t.v_disp, v_remaining)
        seg = gal.ChainSegment(t, delta)
        segments.append(seg)
        v_remaining = v_remaining - seg.v_disp
    return segments
