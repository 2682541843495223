"""Local HTTP companion service for interactive pure-pixel selection.

Images are uploaded once and kept in memory; unmixing requests become jobs
executed one at a time by a FIFO worker thread, polled by the client.
Composite renderings and abundance maps are served as raw byte grids with
the dimensions and scaling bounds in response headers.
"""

import argparse
import json
import queue
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Form, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .dictionaries import RegionSpec, constraint_from_json, from_regions, validate_problem
from .errors import Infeasible, ParseError, UnmixError
from .hsio import HsiCube, cube_to_matrix, parse_csv_payload, parse_raw_payload
from .m2pals import M2palsOptions, m2pals

JOB_STATES = ("queued", "running", "done", "failed")


@dataclass
class Job:
    id: str
    state: str
    request: dict
    result: dict | None = None
    error: str | None = None


@dataclass
class ServiceState:
    images: dict = field(default_factory=dict)  # image_id -> HsiCube
    jobs: dict = field(default_factory=dict)  # job_id -> Job
    abundances: dict = field(default_factory=dict)  # job_id -> (n, r) array
    lock: threading.Lock = field(default_factory=threading.Lock)
    queue: "queue.Queue" = field(default_factory=queue.Queue)


def scale_to_bytes(plane):
    """Min-max scale a 2-d array to uint8; a constant plane maps to 128."""
    lo = float(plane.min())
    hi = float(plane.max())
    if hi == lo:
        return np.full(plane.shape, 128, dtype=np.uint8), lo, hi
    scaled = np.round((plane - lo) / (hi - lo) * 255.0)
    return scaled.astype(np.uint8), lo, hi


def _byte_grid_response(planes):
    """Stack (h, w) planes into an interleaved h x w x c byte grid response."""
    bytes_planes = []
    mins = []
    maxs = []
    for plane in planes:
        b, lo, hi = scale_to_bytes(plane)
        bytes_planes.append(b)
        mins.append(repr(lo))
        maxs.append(repr(hi))
    grid = np.stack(bytes_planes, axis=-1)  # h x w x c
    h, w, c = grid.shape
    return Response(
        content=grid.tobytes(order="C"),
        media_type="application/octet-stream",
        headers={
            "x-height": str(h),
            "x-width": str(w),
            "x-channels": str(c),
            "x-scale-min": ",".join(mins),
            "x-scale-max": ",".join(maxs),
        },
    )


def _parse_regions(payload):
    regions = []
    for k, obj in enumerate(payload):
        try:
            rect = tuple(int(v) for v in obj["rect"])
            cons = constraint_from_json(obj["constraint"])
            label = str(obj.get("label", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad region #{k}: {exc}") from exc
        regions.append(RegionSpec(rect=rect, count_constraint=cons, label=label))
    return regions


def _execute_unmix(state, job):
    req = job.request
    cube = state.images[req["image_id"]]
    regions = _parse_regions(req["regions"])
    dicts, constraints = from_regions(cube, regions)
    opts = M2palsOptions(
        nonnegative_b=bool(req.get("nonneg", True)),
        metric=req.get("metric", "nip"),
        rng_seed=int(req.get("seed", 0)),
    )
    data = cube_to_matrix(cube)
    result = m2pals(data, dicts, constraints, int(req["r"]), opts)

    sel = result.selection
    selected = []
    for j in range(len(sel.column_to_dict)):
        d = result.dictionaries[sel.column_to_dict[j]]
        atom = int(sel.column_to_atom[j])
        ref = d.atom_refs[atom] if d.atom_refs is not None else None
        selected.append(
            {
                "column": j,
                "region_label": d.name,
                "dictionary": d.id,
                "atom": atom,
                "pixel": [int(ref[0]), int(ref[1])] if ref is not None else None,
            }
        )
    with state.lock:
        state.abundances[job.id] = result.b
    return {
        "selected": selected,
        "relative_error": result.relative_error,
        "iterations": result.iterations,
        "converged": result.converged,
        "abundance_maps": [
            f"/jobs/{job.id}/abundance/{k}" for k in range(result.b.shape[1])
        ],
    }


def _worker_loop(state):
    while True:
        job_id = state.queue.get()
        if job_id is None:
            return
        with state.lock:
            job = state.jobs[job_id]
            job.state = "running"
        try:
            result = _execute_unmix(state, job)
            with state.lock:
                job.result = result
                job.state = "done"
        except UnmixError as exc:
            with state.lock:
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "failed"
        except Exception as exc:  # keep the worker alive on bugs
            with state.lock:
                job.error = f"internal error: {exc}"
                job.state = "failed"


def create_app(cors_origins=("*",)):
    state = ServiceState()
    worker = threading.Thread(target=_worker_loop, args=(state,), daemon=True)
    worker.start()

    app = FastAPI(title="specmix service")
    app.state.store = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["x-height", "x-width", "x-channels", "x-scale-min", "x-scale-max"],
    )

    @app.post("/images")
    async def upload_image(
        payload: UploadFile,
        header: UploadFile | None = None,
        format: str = Form("raw"),
    ):
        body = await payload.read()
        if header is None:
            return JSONResponse(
                status_code=400, content={"detail": "missing header file part"}
            )
        try:
            meta = json.loads((await header.read()).decode("utf-8"))
            height = int(meta["height"])
            width = int(meta["width"])
            bands = int(meta["bands"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            return JSONResponse(
                status_code=400,
                content={"detail": f"bad header: {exc}"},
            )
        try:
            if format == "csv":
                data = parse_csv_payload(
                    body.decode("utf-8"), height, width, bands, name=payload.filename or "csv"
                )
            elif format == "raw":
                data = parse_raw_payload(
                    body, height, width, bands, name=payload.filename or "raw"
                )
            else:
                return JSONResponse(
                    status_code=400, content={"detail": f"unknown format {format!r}"}
                )
            cube = HsiCube(height, width, bands, data,
                           wavelengths=meta.get("wavelengths"))
        except (ParseError, UnmixError, ValueError, UnicodeDecodeError) as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        image_id = uuid.uuid4().hex
        with state.lock:
            state.images[image_id] = cube
        return {
            "image_id": image_id,
            "height": cube.height,
            "width": cube.width,
            "bands": cube.bands,
        }

    @app.get("/images/{image_id}/composite")
    def composite(image_id: str, bands: str = "0"):
        with state.lock:
            cube = state.images.get(image_id)
        if cube is None:
            return JSONResponse(status_code=404, content={"detail": "unknown image"})
        try:
            band_idx = [int(b) for b in bands.split(",") if b.strip() != ""]
        except ValueError:
            return JSONResponse(status_code=400, content={"detail": f"bad bands {bands!r}"})
        if not band_idx or len(band_idx) not in (1, 3):
            return JSONResponse(
                status_code=400, content={"detail": "bands must list 1 or 3 indices"}
            )
        if any(b < 0 or b >= cube.bands for b in band_idx):
            return JSONResponse(
                status_code=400,
                content={"detail": f"band out of range 0..{cube.bands - 1}"},
            )
        return _byte_grid_response([cube.data[b] for b in band_idx])

    @app.post("/unmix")
    async def submit_unmix(request: Request):
        try:
            req = await request.json()
        except json.JSONDecodeError as exc:
            return JSONResponse(status_code=400, content={"detail": f"bad JSON: {exc}"})
        image_id = req.get("image_id")
        with state.lock:
            cube = state.images.get(image_id)
        if cube is None:
            return JSONResponse(status_code=404, content={"detail": "unknown image"})
        try:
            regions = _parse_regions(req.get("regions", []))
            rank = int(req["r"])
            dicts, constraints = from_regions(cube, regions)
        except (ParseError, KeyError, TypeError, ValueError, UnmixError) as exc:
            if isinstance(exc, Infeasible):
                return JSONResponse(
                    status_code=409,
                    content={"detail": str(exc), "problems": [str(exc)]},
                )
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        report = validate_problem(dicts, constraints, rank)
        if not report.ok:
            return JSONResponse(
                status_code=409,
                content={"detail": "infeasible constraints", "problems": report.problems},
            )
        job = Job(id=uuid.uuid4().hex, state="queued", request=req)
        with state.lock:
            state.jobs[job.id] = job
        state.queue.put(job.id)
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        with state.lock:
            job = state.jobs.get(job_id)
            if job is None:
                return JSONResponse(status_code=404, content={"detail": "unknown job"})
            return {
                "id": job.id,
                "state": job.state,
                "request": job.request,
                "result": job.result,
                "error": job.error,
            }

    @app.get("/jobs/{job_id}/abundance/{k}")
    def abundance(job_id: str, k: int):
        with state.lock:
            job = state.jobs.get(job_id)
            maps = state.abundances.get(job_id)
            cube = state.images.get(job.request.get("image_id")) if job else None
        if job is None or maps is None or cube is None or job.state != "done":
            return JSONResponse(status_code=404, content={"detail": "no such abundance map"})
        if k < 0 or k >= maps.shape[1]:
            return JSONResponse(status_code=404, content={"detail": "no such endmember"})
        plane = maps[:, k].reshape(cube.height, cube.width)
        return _byte_grid_response([plane])

    return app


def main(argv=None):
    parser = argparse.ArgumentParser(prog="specmix-serve")
    parser.add_argument("--port", type=int, default=7878)
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)
    import uvicorn

    uvicorn.run(create_app(), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
