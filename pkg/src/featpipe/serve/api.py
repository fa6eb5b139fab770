"""HTTP labeling service.

Featurization is asynchronous (model inference is the slow half, polled via
status); training is synchronous (a classifier fit on sparse labels is
fast). Per-session mutations are serialized through a per-session lock, and
featurization jobs run on a bounded worker pool.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image
from pydantic import BaseModel

from featpipe import geometry, pixelclf, store, strokes
from featpipe.featurize import get_backend, upsample
from featpipe.featurize.io import write_fmap
from featpipe.serve.config import ApiConfig
from featpipe.serve.specs import parse_transform_set


class CreateSession(BaseModel):
    name: str | None = None
    classes: list[int] | None = None


class ImageUpload(BaseModel):
    image_id: str
    png_base64: str


class FeaturizeRequest(BaseModel):
    backend: str | None = None
    transform_set: str | None = None
    mode: str = "sequential"


class TrainRequest(BaseModel):
    kind: str = "logistic"
    sources: list[str] = ["deep"]
    include_attention: bool = False
    c_reg: float = 1.0
    seed: int = 0


class LabelUpload(BaseModel):
    width: int
    height: int
    classes: dict[str, list[list[int]]]


@dataclass
class FeaturizeJob:
    state: str = "idle"  # idle | running | done | error
    done: int = 0
    total: int = 0
    error: str | None = None
    backend_spec: str | None = None
    tset_json: str | None = None


@dataclass
class SessionRuntime:
    session: store.Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    job: FeaturizeJob = field(default_factory=FeaturizeJob)


def _png_bytes(labels: np.ndarray) -> bytes:
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    palette = store._default_palette()
    img.putpalette(palette.ravel().tolist())
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(config: ApiConfig) -> FastAPI:
    app = FastAPI(title="featpipe labeling service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if config.ui_root:
        from pathlib import Path

        from fastapi.staticfiles import StaticFiles

        ui = Path(config.ui_root)
        if not (ui / "index.html").exists():
            raise ValueError(f"ui_root {ui} has no index.html (run the frontend build)")
        app.mount("/ui", StaticFiles(directory=ui, html=True), name="ui")

    runtimes: dict[str, SessionRuntime] = {}
    registry_lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=config.workers)

    def runtime(session_id: str) -> SessionRuntime:
        with registry_lock:
            if session_id not in runtimes:
                try:
                    sess = store.Session.open(config.session_root, session_id)
                except FileNotFoundError:
                    raise HTTPException(404, f"unknown session {session_id!r}")
                runtimes[session_id] = SessionRuntime(session=sess)
            return runtimes[session_id]

    def session(session_id: str) -> store.Session:
        return runtime(session_id).session

    def current_recipe(sess: store.Session, rt: SessionRuntime, req: TrainRequest):
        job = rt.job
        backend_spec = job.backend_spec or config.backend
        backend = get_backend(backend_spec)
        tset = (
            parse_transform_set(config.transform_set)
            if job.tset_json is None
            else geometry.TransformSet.from_json(job.tset_json)
        )
        recipe = pixelclf.make_recipe(
            tuple(req.sources),
            backend=backend if "deep" in req.sources else None,
            transform_set=tset,
            include_attention=req.include_attention,
        )
        return backend, recipe

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession | None = None) -> dict:
        session_id = uuid.uuid4().hex[:12]
        cfg = {
            "name": (body.name if body else None) or session_id,
            "classes": (body.classes if body else None) or [1, 2, 3, 4, 5],
            "backend": config.backend,
            "transform_set": config.transform_set,
        }
        sess = store.Session.create(config.session_root, session_id, cfg)
        with registry_lock:
            runtimes[session_id] = SessionRuntime(session=sess)
        return {"id": session_id, "config": cfg}

    @app.get("/sessions/{session_id}/status")
    def status(session_id: str) -> dict:
        sess = session(session_id)
        rt = runtime(session_id)
        job = rt.job
        return {
            "id": session_id,
            "images": sess.image_ids(),
            "labeled": sess.labeled_ids(),
            "classifiers": sess.classifier_versions(),
            "featurize": {
                "state": job.state,
                "done": job.done,
                "total": job.total,
                "error": job.error,
            },
            "cache": {"hits": sess.cache.hits, "misses": sess.cache.misses},
            "config": sess.config,
        }

    @app.post("/sessions/{session_id}/images", status_code=201)
    async def upload_image(session_id: str, request: Request) -> dict:
        sess = session(session_id)
        rt = runtime(session_id)
        ctype = request.headers.get("content-type", "")
        if ctype.startswith("image/png"):
            image_id = request.query_params.get("image_id")
            if not image_id:
                raise HTTPException(422, "raw PNG upload needs ?image_id=")
            data = await request.body()
        else:
            body = ImageUpload(**(await request.json()))
            image_id = body.image_id
            try:
                data = base64.b64decode(body.png_base64)
            except Exception:
                raise HTTPException(422, "png_base64 is not valid base64")
        try:
            img = Image.open(io.BytesIO(data))
            img.verify()
        except Exception:
            raise HTTPException(422, "body is not a decodable image")
        with rt.lock:
            sess.add_image(image_id, data)
        return {"image_id": image_id}

    @app.post("/sessions/{session_id}/featurize", status_code=202)
    def featurize(session_id: str, body: FeaturizeRequest | None = None) -> dict:
        sess = session(session_id)
        rt = runtime(session_id)
        body = body or FeaturizeRequest()
        with rt.lock:
            if rt.job.state == "running":
                raise HTTPException(409, "featurization already running")
            backend_spec = body.backend or config.backend
            tset_spec = body.transform_set or config.transform_set
            try:
                backend = get_backend(backend_spec)
                tset = parse_transform_set(tset_spec)
            except ValueError as exc:
                raise HTTPException(422, str(exc))
            ids = sess.image_ids()
            rt.job = FeaturizeJob(
                state="running",
                total=len(ids),
                backend_spec=backend_spec,
                tset_json=tset.to_json(),
            )

        def run() -> None:
            job = rt.job
            try:
                for image_id in ids:
                    image = sess.load_image(image_id)
                    feats, attn = sess.cache.lookup_pair(image, backend.descriptor, tset)
                    if feats is None or attn is None:
                        fm, am = upsample(backend, image, tset, mode=body.mode, image_id=image_id)
                        sess.cache.store_pair(image, backend.descriptor, tset, fm.data, am.data)
                    job.done += 1
                job.state = "done"
            except Exception as exc:  # surfaced via status polling
                job.state = "error"
                job.error = f"{type(exc).__name__}: {exc}"

        executor.submit(run)
        return {"state": "running", "total": len(ids)}

    @app.put("/sessions/{session_id}/labels/{image_id}")
    async def put_labels(session_id: str, image_id: str, request: Request) -> dict:
        sess = session(session_id)
        rt = runtime(session_id)
        try:
            image = sess.load_image(image_id)
        except KeyError:
            raise HTTPException(404, f"unknown image {image_id!r}")
        h, w = image.shape[:2]
        ctype = request.headers.get("content-type", "")
        if ctype.startswith("image/png"):
            raw = await request.body()
            arr = np.asarray(Image.open(io.BytesIO(raw)))
            if arr.shape[:2] != (h, w):
                raise HTTPException(422, f"label shape {arr.shape[:2]} != image {(h, w)}")
            labels = arr.astype(np.int32)
        else:
            body = LabelUpload(**(await request.json()))
            if (body.height, body.width) != (h, w):
                raise HTTPException(
                    422, f"label raster {(body.height, body.width)} != image {(h, w)}"
                )
            try:
                runs = {int(k): v for k, v in body.classes.items()}
                labels = strokes.runs_to_mask(runs, width=w, height=h)
            except ValueError as exc:
                raise HTTPException(422, str(exc))
        palette = sess.config.get("classes")
        if palette:
            present = set(np.unique(labels).tolist()) - {0}
            extra = present - set(palette)
            if extra:
                raise HTTPException(422, f"class ids {sorted(extra)} outside session palette")
        with rt.lock:
            sess.save_labels(image_id, labels)
        return {"image_id": image_id, "labeled_pixels": int((labels > 0).sum())}

    @app.get("/sessions/{session_id}/labels/{image_id}")
    def get_labels(session_id: str, image_id: str) -> Response:
        sess = session(session_id)
        labels = sess.load_labels(image_id)
        if labels is None:
            raise HTTPException(404, f"no labels for image {image_id!r}")
        return Response(content=_png_bytes(labels), media_type="image/png")

    @app.post("/sessions/{session_id}/train")
    def train(session_id: str, body: TrainRequest | None = None) -> dict:
        sess = session(session_id)
        rt = runtime(session_id)
        body = body or TrainRequest()
        with rt.lock:
            needs_deep = "deep" in body.sources
            if needs_deep and rt.job.state != "done":
                raise HTTPException(
                    409, f"featurization is {rt.job.state}; train needs completed features"
                )
            labeled = sess.labeled_ids()
            if not labeled:
                raise HTTPException(422, "no labels uploaded")
            try:
                backend, recipe = current_recipe(sess, rt, body)
            except ValueError as exc:
                raise HTTPException(422, str(exc))

            xs, ys = [], []
            for image_id in labeled:
                image = sess.load_image(image_id)
                labels = sess.load_labels(image_id)
                try:
                    stack = pixelclf.build_feature_stack(
                        image, recipe, backend=backend, cache=sess.cache, image_id=image_id
                    )
                except ValueError as exc:
                    raise HTTPException(422, f"feature recipe mismatch: {exc}")
                mask = labels > 0
                xs.append(stack[mask])
                ys.append(labels[mask])
            x = np.concatenate(xs, axis=0)
            y = np.concatenate(ys, axis=0)
            try:
                clf = pixelclf.train(
                    x, y, kind=body.kind, recipe=recipe, seed=body.seed, c_reg=body.c_reg
                )
            except ValueError as exc:
                raise HTTPException(422, str(exc))
            version = sess.next_classifier_version()
            pixelclf.save_classifier(clf, sess.classifier_path(version))
        return {
            "version": version,
            "classes": np.asarray(clf.classes).tolist(),
            "n_train_pixels": int(y.size),
        }

    def _predict_image(sess: store.Session, rt: SessionRuntime, image_id: str, version: int):
        clf = pixelclf.load_classifier(sess.classifier_path(version))
        recipe = pixelclf.FeatureRecipe.from_json(clf.recipe_json)
        backend = None
        if "deep" in recipe.sources:
            job_spec = rt.job.backend_spec or config.backend
            backend = get_backend(job_spec)
            if backend.descriptor.to_json() != recipe.backend:
                raise HTTPException(
                    422,
                    "feature recipe mismatch:\n"
                    f"  classifier: {recipe.backend}\n"
                    f"  session:    {backend.descriptor.to_json()}",
                )
        image = sess.load_image(image_id)
        stack = pixelclf.build_feature_stack(
            image, recipe, backend=backend, cache=sess.cache, image_id=image_id
        )
        labels, probs = pixelclf.predict(clf, stack, recipe=recipe)
        return labels, probs

    @app.get("/sessions/{session_id}/predictions/{image_id}")
    def get_prediction(
        session_id: str, image_id: str, version: int | None = None, probabilities: int = 0
    ) -> Response:
        sess = session(session_id)
        rt = runtime(session_id)
        versions = sess.classifier_versions()
        if not versions:
            raise HTTPException(404, "no trained classifier")
        version = version or versions[-1]
        if version not in versions:
            raise HTTPException(404, f"unknown classifier version {version}")
        if image_id not in sess.image_ids():
            raise HTTPException(404, f"unknown image {image_id!r}")
        with rt.lock:
            labels, probs = _predict_image(sess, rt, image_id, version)
            sess.save_prediction(image_id, labels)
        if probabilities:
            tmp = sess.root / "predictions" / f"{image_id}.{version}.prob.fmap"
            write_fmap(tmp, probs.astype(np.float32), {"classes": probs.shape[-1]})
            return Response(content=tmp.read_bytes(), media_type="application/octet-stream")
        return Response(content=_png_bytes(labels), media_type="image/png")

    @app.post("/sessions/{session_id}/apply")
    def apply_all(session_id: str, version: int | None = None) -> dict:
        sess = session(session_id)
        rt = runtime(session_id)
        versions = sess.classifier_versions()
        if not versions:
            raise HTTPException(404, "no trained classifier")
        version = version or versions[-1]
        predicted = []
        with rt.lock:
            for image_id in sess.image_ids():
                labels, _ = _predict_image(sess, rt, image_id, version)
                sess.save_prediction(image_id, labels)
                predicted.append(image_id)
        return {"version": version, "predicted": predicted}

    return app
