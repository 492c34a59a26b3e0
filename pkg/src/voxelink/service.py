"""HTTP + WebSocket session service.

Endpoints (JSON unless noted):

    POST /sessions                      create a session from a TIFF stack dir
    GET  /sessions/{id}/slice           PNG, optional mask overlay
    POST /sessions/{id}/strokes         apply one stroke-log object
    POST /sessions/{id}/undo|redo       journal navigation
    GET  /sessions/{id}/mesh            STL / OBJ / wire-binary mesh
    POST /sessions/{id}/export          masks + mesh + metadata to a directory
    WS   /sessions/{id}/events          JobEvent stream

Wire-binary mesh framing (little-endian): magic b"VXMESH01", uint32
vertex_count, uint32 triangle_count, float32 vertices (count*3), uint32
indices (count*3).

Each stroke cancels any running extraction and schedules a new one after a
debounce window so bursts of strokes coalesce into a single job.
"""

from __future__ import annotations

import asyncio
import io
import itertools
import os
import queue
import struct
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from fastapi import FastAPI, Query, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from PIL import Image

from . import annotation, meshopt, strokelog, surface, volume
from .annotation import CanvasPlane, EditJournal
from .errors import SchemaError, UnknownSession, VoxelinkError
from .meshopt import DecimationConfig, LodLadder, build_lod_ladder, select_lod
from .surface import CancelToken, ExtractionState, MCConfig, TriangleMesh
from .volume import MaskVolume, SliceCache, VoxelVolume

DEBOUNCE_MS = 150.0
DEFAULT_LOD_RATIOS = (1.0, 0.25)
DEFAULT_LOD_DISTANCES = (0.0, 500.0)
WIRE_MAGIC = b"VXMESH01"


def mesh_to_wire_bytes(mesh: TriangleMesh) -> bytes:
    head = WIRE_MAGIC + struct.pack(
        "<II", len(mesh.vertices), mesh.triangle_count
    )
    return (
        head
        + mesh.vertices.astype("<f4").tobytes()
        + mesh.triangles.astype("<u4").tobytes()
    )


def default_canvas(vol: VoxelVolume) -> CanvasPlane:
    nx, ny, _ = vol.dims
    sx, sy, _ = vol.spacing
    return CanvasPlane(
        origin=(0.0, 0.0, 0.0),
        u_axis=(1.0, 0.0, 0.0),
        v_axis=(0.0, 1.0, 0.0),
        width_mm=nx * sx,
        height_mm=ny * sy,
        axis="axial",
        index=0,
        pixel_dims=(nx, ny),
    )


@dataclass
class Job:
    job_id: str
    token: CancelToken
    thread: Optional[threading.Thread] = None
    terminal_sent: bool = False


class Session:
    """One loaded volume with its mask, journal and extraction pipeline."""

    def __init__(self, sid: str, vol: VoxelVolume, mask: MaskVolume,
                 cache_slices: int, mc_config: MCConfig,
                 debounce_ms: float = DEBOUNCE_MS):
        self.id = sid
        self.volume = vol
        self.mask = mask
        self.canvas = default_canvas(vol)
        self.journal = EditJournal(depth=64)
        self.cache = SliceCache(vol, capacity=cache_slices)
        self.mc_config = mc_config
        self.debounce_s = debounce_ms / 1000.0
        self.lock = threading.RLock()  # serializes edits/journal/export
        self.job_lock = threading.Lock()
        self.active_job: Optional[Job] = None
        self.pending_timer: Optional[threading.Timer] = None
        self.mesh: Optional[TriangleMesh] = None
        self.lod: Optional[LodLadder] = None
        self.jobs_started = 0
        self._job_seq = itertools.count(1)
        self.subscribers: List[queue.Queue] = []
        self.sub_lock = threading.Lock()

    # -- events ------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self.sub_lock:
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self.sub_lock:
            if q in self.subscribers:
                self.subscribers.remove(q)

    def publish(self, event: dict) -> None:
        with self.sub_lock:
            for q in self.subscribers:
                q.put(event)

    # -- extraction --------------------------------------------------------

    def schedule_extraction(self) -> None:
        """Debounced job restart: cancel running job, coalesce bursts."""
        with self.job_lock:
            if self.active_job is not None:
                self.active_job.token.cancel()
            if self.pending_timer is not None:
                self.pending_timer.cancel()
            timer = threading.Timer(self.debounce_s, self._start_job)
            timer.daemon = True
            self.pending_timer = timer
            timer.start()

    def _start_job(self) -> None:
        with self.job_lock:
            self.pending_timer = None
            if self.active_job is not None:
                self.active_job.token.cancel()
            job = Job(job_id=f"{self.id}-job-{next(self._job_seq)}",
                      token=CancelToken())
            self.active_job = job
            self.jobs_started += 1
        with self.lock:
            mask_snapshot = MaskVolume(self.mask.data.copy())
        thread = threading.Thread(
            target=self._run_job, args=(job, mask_snapshot), daemon=True
        )
        job.thread = thread
        thread.start()

    def _run_job(self, job: Job, mask_snapshot: MaskVolume) -> None:
        grid = surface.build_density_grid(
            mask_snapshot, self.mc_config, spacing=self.volume.spacing
        )

        def on_progress(p: surface.ExtractionProgress) -> None:
            if p.cubes_done < p.cubes_total and not p.cancelled:
                self.publish({
                    "job_id": job.job_id,
                    "kind": "progress",
                    "payload": {
                        "cubes_done": p.cubes_done,
                        "cubes_total": p.cubes_total,
                        "partial_triangles": p.partial_triangles,
                    },
                })

        mesh = surface.extract_isosurface(
            grid, self.mc_config, on_progress=on_progress, cancel=job.token
        )
        if mesh.cancelled:
            with self.job_lock:
                if self.active_job is job:
                    self.active_job = None
            self.publish({
                "job_id": job.job_id, "kind": "cancelled", "payload": {},
            })
            job.terminal_sent = True
            return
        with self.job_lock:
            if self.active_job is job:
                self.active_job = None
        with self.lock:
            self.mesh = mesh
            self.lod = None  # rebuilt lazily on demand
        self.publish({
            "job_id": job.job_id,
            "kind": "done",
            "payload": {"triangles": mesh.triangle_count,
                        "vertices": len(mesh.vertices)},
        })
        job.terminal_sent = True

    def extraction_pending(self) -> Optional[str]:
        """Job id if a job is running or scheduled, else None."""
        with self.job_lock:
            if self.pending_timer is not None:
                return f"{self.id}-job-pending"
            if self.active_job is not None:
                return self.active_job.job_id
        return None

    def get_ladder(self) -> LodLadder:
        with self.lock:
            if self.mesh is None:
                raise RuntimeError("no mesh available")
            if self.lod is None:
                deduped = meshopt.dedupe_vertices(self.mesh, 0.0)
                self.lod = build_lod_ladder(
                    deduped, DEFAULT_LOD_RATIOS, DEFAULT_LOD_DISTANCES
                )
            return self.lod


class SessionStore:
    def __init__(self):
        self._sessions: Dict[str, Session] = {}
        self._lock = threading.Lock()

    def add(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.id] = session

    def get(self, sid: str) -> Session:
        with self._lock:
            try:
                return self._sessions[sid]
            except KeyError:
                raise UnknownSession(f"unknown session {sid!r}")


def _error_response(exc: Exception, status: int) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": type(exc).__name__, "message": str(exc)},
    )


def create_app(debounce_ms: float = DEBOUNCE_MS,
               cache_slices: Optional[int] = None) -> FastAPI:
    app = FastAPI(title="voxelink")
    store = SessionStore()
    app.state.store = store
    if cache_slices is None:
        cache_slices = int(os.environ.get("VOXELINK_CACHE_SLICES", "64"))

    @app.exception_handler(VoxelinkError)
    async def _voxelink_error(request: Request, exc: VoxelinkError):
        from .errors import (DecodeError, DimensionMismatch, EmptyStack,
                             IndexOutOfRange, IoError, NoMeshYet,
                             UnsupportedPixelFormat)
        if isinstance(exc, UnknownSession):
            return _error_response(exc, 404)
        if isinstance(exc, IndexOutOfRange):
            return _error_response(exc, 404)
        if isinstance(exc, NoMeshYet):
            resp = _error_response(exc, 202)
            resp.headers["X-Job-Id"] = exc.job_id or ""
            return resp
        return _error_response(exc, 400)

    @app.post("/sessions")
    async def create_session(payload: dict):
        stack_dir = payload.get("stack_dir")
        if not stack_dir or not Path(stack_dir).is_dir():
            return _error_response(
                ValueError(f"stack_dir {stack_dir!r} is not a directory"), 400
            )
        spacing = tuple(payload.get("spacing", volume.DEFAULT_SPACING))
        window = payload.get("window")
        paths = volume.list_stack_dir(stack_dir)
        vol = volume.load_tiff_stack(
            paths, spacing=spacing,
            window=tuple(window) if window else None,
        )
        mask_dir = payload.get("mask_dir")
        if mask_dir:
            mask = volume.load_mask_stack(
                volume.list_stack_dir(mask_dir), vol.dims
            )
        else:
            mask = MaskVolume.empty_like(vol)
        mc = MCConfig(
            iso_level=float(payload.get("iso", 0.5)),
            yield_interval=int(payload.get("yield_interval", 1000)),
        )
        sid = uuid.uuid4().hex[:12]
        session = Session(sid, vol, mask, cache_slices, mc,
                          debounce_ms=debounce_ms)
        store.add(session)
        return {
            "session_id": sid,
            "dims": list(vol.dims),
            "spacing": list(vol.spacing),
        }

    @app.get("/sessions/{sid}/slice")
    async def get_slice_png(
        sid: str,
        axis: str = "axial",
        index: int = 0,
        overlay: bool = False,
        alpha: float = 0.5,
        color: str = "255,0,0",
    ):
        session = store.get(sid)
        img = volume.get_slice(session.volume, axis, index)
        if overlay:
            with session.lock:
                mask_px = volume.get_slice(session.mask, axis, index).pixels
            rgb = tuple(int(c) for c in color.split(","))
            rgba = annotation.composite_overlay(img, mask_px, rgb, alpha)
            pil = Image.fromarray(rgba, mode="RGBA")
        else:
            pil = Image.fromarray(img.pixels, mode="L")
        buf = io.BytesIO()
        pil.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/sessions/{sid}/strokes")
    async def post_stroke(sid: str, payload: dict):
        session = store.get(sid)
        stroke, canvas = strokelog.parse_stroke(payload)
        with session.lock:
            record = annotation.apply_stroke(session.mask, canvas, stroke)
            session.journal.record(record)
            session.canvas = canvas
        if len(record):
            session.schedule_extraction()
        return {"changed_count": len(record),
                "slice": list(record.slice)}

    @app.post("/sessions/{sid}/undo")
    async def post_undo(sid: str):
        session = store.get(sid)
        with session.lock:
            record = session.journal.undo(session.mask)
        if record is None:
            return {"changed_count": 0, "slice": None}
        if len(record):
            session.schedule_extraction()
        return {"changed_count": len(record), "slice": list(record.slice)}

    @app.post("/sessions/{sid}/redo")
    async def post_redo(sid: str):
        session = store.get(sid)
        with session.lock:
            record = session.journal.redo(session.mask)
        if record is None:
            return {"changed_count": 0, "slice": None}
        if len(record):
            session.schedule_extraction()
        return {"changed_count": len(record), "slice": list(record.slice)}

    @app.get("/sessions/{sid}/mesh")
    async def get_mesh(sid: str, distance: float = 0.0, format: str = "wire-binary"):
        from .errors import NoMeshYet
        session = store.get(sid)
        job_id = session.extraction_pending()
        with session.lock:
            have_mesh = session.mesh is not None
        if not have_mesh:
            raise NoMeshYet("extraction has not completed yet", job_id=job_id)
        ladder = session.get_ladder()
        level = select_lod(ladder, distance)
        mesh = ladder.levels[level][0]
        if format == "stl":
            return Response(content=meshopt.mesh_to_stl_bytes(mesh),
                            media_type="application/octet-stream")
        if format == "obj":
            return Response(content=meshopt.mesh_to_obj(mesh),
                            media_type="text/plain")
        if format == "wire-binary":
            return Response(content=mesh_to_wire_bytes(mesh),
                            media_type="application/octet-stream")
        return _error_response(ValueError(f"unknown format {format!r}"), 400)

    @app.post("/sessions/{sid}/export")
    async def export(sid: str, payload: dict):
        session = store.get(sid)
        out_dir = Path(payload.get("directory", ""))
        out_dir.mkdir(parents=True, exist_ok=True)
        with session.lock:
            mask_files = volume.export_mask_stack(session.mask, out_dir, "mask")
            meta_file = volume.write_volume_meta(
                session.volume, out_dir / "volume.meta"
            )
            mesh = session.mesh
            if mesh is None:
                grid = surface.build_density_grid(
                    session.mask, session.mc_config,
                    spacing=session.volume.spacing,
                )
                mesh = surface.extract_isosurface(grid, session.mc_config)
            decimated = meshopt.decimate(
                meshopt.dedupe_vertices(mesh, 0.0),
                DecimationConfig(target_ratio=0.25),
            ).mesh
            mesh_file = meshopt.write_stl(decimated, out_dir / "mesh.stl")
        return {"mask_files": mask_files, "mesh_file": mesh_file,
                "meta_file": meta_file}

    @app.websocket("/sessions/{sid}/events")
    async def events(ws: WebSocket, sid: str):
        try:
            session = store.get(sid)
        except UnknownSession:
            await ws.close(code=4404)
            return
        await ws.accept()
        q = session.subscribe()
        loop = asyncio.get_event_loop()

        def poll():
            try:
                return q.get(timeout=0.1)
            except queue.Empty:
                return None

        # concurrently reading the socket is the only way to notice a
        # client-side disconnect while we block on the event queue
        reader = asyncio.ensure_future(ws.receive())
        try:
            while True:
                if reader.done():
                    break  # client went away (or sent a close frame)
                event = await loop.run_in_executor(None, poll)
                if event is not None:
                    await ws.send_json(event)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            reader.cancel()
            session.unsubscribe(q)

    return app
