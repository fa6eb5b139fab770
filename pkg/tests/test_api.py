import base64
import io
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from featpipe.serve.api import create_app
from featpipe.serve.config import ApiConfig


def png_bytes(array):
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return buf.getvalue()


def two_region_image():
    img = np.zeros((16, 16, 3), dtype=np.uint8)
    img[:, 8:] = 255
    return img


@pytest.fixture
def client(tmp_path):
    cfg = ApiConfig(
        backend="synthetic:patch-mean?patch=4",
        transform_set="identity",
        session_root=str(tmp_path / "sessions"),
        workers=2,
    ).validate()
    app = create_app(cfg)
    with TestClient(app) as c:
        yield c


def wait_featurized(client, sid, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        state = client.get(f"/sessions/{sid}/status").json()["featurize"]
        if state["state"] == "done":
            return
        if state["state"] == "error":
            raise AssertionError(f"featurize failed: {state['error']}")
        time.sleep(0.02)
    raise AssertionError("featurize did not complete in time")


def run_full_loop(client, image, runs):
    sid = client.post("/sessions", json={"name": "loop"}).json()["id"]
    r = client.post(
        f"/sessions/{sid}/images",
        json={"image_id": "a", "png_base64": base64.b64encode(png_bytes(image)).decode()},
    )
    assert r.status_code == 201
    assert client.post(f"/sessions/{sid}/featurize", json={}).status_code == 202
    wait_featurized(client, sid)
    r = client.put(
        f"/sessions/{sid}/labels/a",
        json={"width": 16, "height": 16, "classes": runs},
    )
    assert r.status_code == 200
    r = client.post(f"/sessions/{sid}/train", json={"kind": "logistic"})
    assert r.status_code == 200, r.text
    version = r.json()["version"]
    r = client.get(f"/sessions/{sid}/predictions/a")
    assert r.status_code == 200
    pred = np.asarray(Image.open(io.BytesIO(r.content)))
    return sid, version, pred


class TestSessionLifecycle:
    def test_create_and_empty_status(self, client):
        r = client.post("/sessions", json={})
        assert r.status_code == 201
        sid = r.json()["id"]
        status = client.get(f"/sessions/{sid}/status").json()
        assert status["images"] == []
        assert status["featurize"]["state"] == "idle"

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/status").status_code == 404
        assert client.post("/sessions/nope/featurize", json={}).status_code == 404

    def test_unknown_image_404(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        r = client.put(f"/sessions/{sid}/labels/ghost", json={"width": 4, "height": 4, "classes": {}})
        assert r.status_code == 404


class TestFullLoop:
    def test_smoke_paint_train_fetch(self, client):
        runs = {"1": [[r, 0, 4] for r in range(4)], "2": [[r, 12, 4] for r in range(4)]}
        sid, version, pred = run_full_loop(client, two_region_image(), runs)
        assert version == 1
        # prediction covers every pixel with a trained class (no unlabeled 0)
        assert set(np.unique(pred).tolist()) <= {1, 2}
        assert (pred > 0).all()
        assert (pred[:, :6] == 1).all()
        assert (pred[:, 10:] == 2).all()

    def test_label_round_trip_pixel_identical(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        rng = np.random.default_rng(5)
        img = rng.integers(0, 255, (16, 16, 3), dtype=np.uint8)
        client.post(
            f"/sessions/{sid}/images",
            json={"image_id": "a", "png_base64": base64.b64encode(png_bytes(img)).decode()},
        )
        labels = np.zeros((16, 16), dtype=np.uint8)
        labels[2:5, 3:9] = 1
        labels[10:14, 0:4] = 3
        r = client.put(
            f"/sessions/{sid}/labels/a",
            content=png_bytes(labels),
            headers={"content-type": "image/png"},
        )
        assert r.status_code == 200
        back = np.asarray(Image.open(io.BytesIO(client.get(f"/sessions/{sid}/labels/a").content)))
        assert np.array_equal(back, labels)

    def test_retrain_versions_accumulate(self, client):
        runs = {"1": [[0, 0, 8]], "2": [[15, 8, 8]]}
        sid, v1, _ = run_full_loop(client, two_region_image(), runs)
        runs2 = {"1": [[0, 0, 8], [1, 0, 8]], "2": [[15, 8, 8]]}
        client.put(f"/sessions/{sid}/labels/a", json={"width": 16, "height": 16, "classes": runs2})
        v2 = client.post(f"/sessions/{sid}/train", json={}).json()["version"]
        assert (v1, v2) == (1, 2)
        # both versions stay retrievable
        for v in (v1, v2):
            assert client.get(f"/sessions/{sid}/predictions/a?version={v}").status_code == 200

    def test_probability_fmap_fetch(self, client):
        runs = {"1": [[0, 0, 8]], "2": [[15, 8, 8]]}
        sid, _, _ = run_full_loop(client, two_region_image(), runs)
        r = client.get(f"/sessions/{sid}/predictions/a?probabilities=1")
        assert r.status_code == 200
        from featpipe.featurize.io import read_fmap
        import tempfile, os

        fd, path = tempfile.mkstemp(suffix=".fmap")
        os.write(fd, r.content)
        os.close(fd)
        probs, _ = read_fmap(path)
        os.unlink(path)
        assert probs.shape == (16, 16, 2)
        np.testing.assert_allclose(probs.sum(axis=2), 1.0, atol=1e-5)

    def test_apply_covers_all_images(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        for image_id in ("a", "b"):
            client.post(
                f"/sessions/{sid}/images",
                json={
                    "image_id": image_id,
                    "png_base64": base64.b64encode(png_bytes(two_region_image())).decode(),
                },
            )
        client.post(f"/sessions/{sid}/featurize", json={})
        wait_featurized(client, sid)
        client.put(
            f"/sessions/{sid}/labels/a",
            json={"width": 16, "height": 16, "classes": {"1": [[0, 0, 6]], "2": [[15, 10, 6]]}},
        )
        client.post(f"/sessions/{sid}/train", json={})
        r = client.post(f"/sessions/{sid}/apply")
        assert r.status_code == 200
        assert sorted(r.json()["predicted"]) == ["a", "b"]


class TestErrorContracts:
    def test_train_before_featurize_409(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        client.post(
            f"/sessions/{sid}/images",
            json={"image_id": "a", "png_base64": base64.b64encode(png_bytes(two_region_image())).decode()},
        )
        client.put(
            f"/sessions/{sid}/labels/a",
            json={"width": 16, "height": 16, "classes": {"1": [[0, 0, 4]], "2": [[1, 0, 4]]}},
        )
        r = client.post(f"/sessions/{sid}/train", json={})
        assert r.status_code == 409

    def test_label_shape_mismatch_422(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        client.post(
            f"/sessions/{sid}/images",
            json={"image_id": "a", "png_base64": base64.b64encode(png_bytes(two_region_image())).decode()},
        )
        r = client.put(
            f"/sessions/{sid}/labels/a",
            json={"width": 8, "height": 8, "classes": {"1": [[0, 0, 2]]}},
        )
        assert r.status_code == 422

    def test_label_outside_palette_422(self, client):
        sid = client.post("/sessions", json={"classes": [1, 2]}).json()["id"]
        client.post(
            f"/sessions/{sid}/images",
            json={"image_id": "a", "png_base64": base64.b64encode(png_bytes(two_region_image())).decode()},
        )
        r = client.put(
            f"/sessions/{sid}/labels/a",
            json={"width": 16, "height": 16, "classes": {"9": [[0, 0, 2]]}},
        )
        assert r.status_code == 422

    def test_single_class_train_422(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        client.post(
            f"/sessions/{sid}/images",
            json={"image_id": "a", "png_base64": base64.b64encode(png_bytes(two_region_image())).decode()},
        )
        client.post(f"/sessions/{sid}/featurize", json={})
        wait_featurized(client, sid)
        client.put(
            f"/sessions/{sid}/labels/a",
            json={"width": 16, "height": 16, "classes": {"1": [[0, 0, 4]]}},
        )
        assert client.post(f"/sessions/{sid}/train", json={}).status_code == 422

    def test_prediction_without_classifier_404(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        assert client.get(f"/sessions/{sid}/predictions/a").status_code == 404


class TestCacheWarmth:
    def test_retrain_hits_cache(self, client):
        runs = {"1": [[0, 0, 8]], "2": [[15, 8, 8]]}
        sid, _, _ = run_full_loop(client, two_region_image(), runs)
        s1 = client.get(f"/sessions/{sid}/status").json()["cache"]
        client.post(f"/sessions/{sid}/train", json={})
        s2 = client.get(f"/sessions/{sid}/status").json()["cache"]
        assert s2["hits"] > s1["hits"]
        assert s2["misses"] == s1["misses"], "retrain must not refeaturize"


class TestConcurrentSessions:
    def test_parallel_sessions_stay_independent(self, client):
        def worker(k):
            img = np.zeros((16, 16, 3), dtype=np.uint8)
            img[:, 8:] = 50 + 40 * k
            runs = {"1": [[0, 0, 8]], "2": [[15, 8, 8]]}
            sid, version, pred = run_full_loop(client, img, runs)
            status = client.get(f"/sessions/{sid}/status").json()
            return sid, version, status

        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(worker, range(4)))
        sids = [r[0] for r in results]
        assert len(set(sids)) == 4
        for sid, version, status in results:
            assert version == 1
            assert status["images"] == ["a"]
            assert status["classifiers"] == [1]
