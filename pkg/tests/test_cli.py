import csv
import json

import numpy as np
import pytest
from PIL import Image

from featpipe.featurize import read_fmap
from featpipe.serve.cli import main


def save_png(path, array):
    Image.fromarray(array).save(path)


@pytest.fixture
def blob_image(tmp_path, rng):
    img = np.full((32, 32, 3), 30, dtype=np.uint8)
    img[8:24, 8:24] = (200, 160, 40)
    path = tmp_path / "blob.png"
    save_png(path, img)
    return path


class TestExitCodes:
    def test_unknown_flag_is_validation_error(self, capsys):
        assert main(["upsample", "--bogus-flag", "x"]) == 1

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_missing_file_is_validation_error(self, tmp_path):
        assert main([
            "upsample", "--image", str(tmp_path / "nope.png"), "--out", str(tmp_path / "o.fmap"),
        ]) == 1

    def test_too_small_image_is_validation_error(self, tmp_path, blob_image):
        out = tmp_path / "o.fmap"
        code = main([
            "upsample", "--image", str(blob_image),
            "--backend", "synthetic:patch-mean?patch=64", "--out", str(out),
        ])
        assert code == 1
        assert not out.exists()

    def test_runtime_failure_is_two(self, tmp_path):
        # a file that exists but cannot be decoded fails at runtime
        corrupt = tmp_path / "corrupt.png"
        corrupt.write_bytes(b"this is not image data")
        out = tmp_path / "o.fmap"
        code = main(["upsample", "--image", str(corrupt), "--out", str(out)])
        assert code == 2
        assert not out.exists()


class TestUpsampleCommand:
    def test_identity_set_writes_fmap(self, tmp_path, blob_image):
        out = tmp_path / "feats.fmap"
        code = main([
            "upsample", "--image", str(blob_image),
            "--backend", "synthetic:patch-mean?patch=4",
            "--set", "identity", "--out", str(out),
        ])
        assert code == 0
        data, prov = read_fmap(out)
        assert data.shape == (32, 32, 3)
        # identity set == nearest-neighbor patch featurization
        img = np.asarray(Image.open(blob_image))
        from featpipe.featurize import PatchMeanBackend, featurize_patches

        pf, _ = featurize_patches(PatchMeanBackend(4, 4), img)
        rows = (np.arange(32) * 8) // 32
        expect = pf[np.ix_(rows, rows)].astype(np.float32)
        assert np.array_equal(data, expect)
        assert prov["image_id"] == "blob"

    def test_pca_output(self, tmp_path, blob_image):
        out = tmp_path / "feats.fmap"
        pca = tmp_path / "pca.png"
        code = main([
            "upsample", "--image", str(blob_image), "--set",
            "standard:stride=4,distances=1-2,flips=true", "--out", str(out),
            "--pca-out", str(pca),
        ])
        assert code == 0
        assert np.asarray(Image.open(pca)).shape == (32, 32, 3)

    def test_standalone_pca_command(self, tmp_path, blob_image):
        fmap = tmp_path / "feats.fmap"
        assert main(["upsample", "--image", str(blob_image), "--out", str(fmap)]) == 0
        pca = tmp_path / "pca.png"
        assert main(["pca", "--fmap", str(fmap), "--out", str(pca)]) == 0
        arr = np.asarray(Image.open(pca))
        assert arr.shape == (32, 32, 3)
        assert arr.std() > 0  # blob fixture has variance to show


class TestUnsupCommands:
    def test_detect_and_saliency(self, tmp_path, blob_image):
        boxes_out = tmp_path / "boxes.json"
        code = main([
            "unsup-detect", "--image", str(blob_image),
            "--backend", "synthetic:patch-mean-center?patch=4",
            "--set", "standard:stride=4,distances=1-2,flips=true",
            "--clusters", "16", "--mode", "single", "--out", str(boxes_out),
        ])
        assert code == 0
        doc = json.loads(boxes_out.read_text())
        assert doc["boxes"], "expected at least the superbox"
        (x0, y0, x1, y1) = doc["boxes"][0]["box"]
        assert 0 <= x0 < x1 <= 32 and 0 <= y0 < y1 <= 32

        mask_out = tmp_path / "sal.png"
        code = main([
            "unsup-saliency", "--image", str(blob_image),
            "--backend", "synthetic:patch-mean-center?patch=4",
            "--set", "standard:stride=4,distances=1-2,flips=true",
            "--clusters", "16", "--out", str(mask_out),
        ])
        assert code == 0
        mask = np.asarray(Image.open(mask_out))
        assert set(np.unique(mask).tolist()) <= {0, 255}


class TestWeakCommands:
    def test_train_then_apply(self, tmp_path, rng):
        images = tmp_path / "images"
        labels = tmp_path / "labels"
        out_dir = tmp_path / "preds"
        images.mkdir()
        labels.mkdir()
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        img[:, 8:] = 255
        save_png(images / "a.png", img)
        lab = np.zeros((16, 16), dtype=np.uint8)
        lab[:4, :4] = 1
        lab[:4, 12:] = 2
        from featpipe.store import save_label_png

        save_label_png(labels / "a.png", lab)

        clf_path = tmp_path / "model.clf"
        code = main([
            "weak-train", "--images", str(images), "--labels", str(labels),
            "--features", "deep", "--backend", "synthetic:patch-mean?patch=4",
            "--set", "identity", "--out", str(clf_path),
        ])
        assert code == 0
        code = main([
            "weak-apply", "--classifier", str(clf_path), "--images", str(images),
            "--backend", "synthetic:patch-mean?patch=4", "--out", str(out_dir),
        ])
        assert code == 0
        pred = np.asarray(Image.open(out_dir / "a.png"))
        assert (pred[:, :6] == 1).all()
        assert (pred[:, 10:] == 2).all()

    def test_hybrid_features_train(self, tmp_path, rng):
        images = tmp_path / "images"
        labels = tmp_path / "labels"
        images.mkdir()
        labels.mkdir()
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        img[:, 8:] = 255
        save_png(images / "a.png", img)
        lab = np.zeros((16, 16), dtype=np.uint8)
        lab[:, 1:5] = 1
        lab[:, 11:15] = 2
        from featpipe.store import save_label_png

        save_label_png(labels / "a.png", lab)
        clf_path = tmp_path / "hybrid.clf"
        code = main([
            "weak-train", "--images", str(images), "--labels", str(labels),
            "--features", "deep+classical", "--backend", "synthetic:patch-mean?patch=4",
            "--set", "identity", "--out", str(clf_path),
        ])
        assert code == 0
        from featpipe import pixelclf

        clf = pixelclf.load_classifier(clf_path)
        recipe = pixelclf.FeatureRecipe.from_json(clf.recipe_json)
        assert recipe.sources == ("deep", "classical")

    def test_apply_with_wrong_backend_rejected(self, tmp_path, rng):
        images = tmp_path / "images"
        labels = tmp_path / "labels"
        images.mkdir()
        labels.mkdir()
        img = rng.integers(0, 255, (16, 16, 3), dtype=np.uint8)
        save_png(images / "a.png", img)
        lab = np.zeros((16, 16), dtype=np.uint8)
        lab[0, :2] = 1
        lab[1, :2] = 2
        from featpipe.store import save_label_png

        save_label_png(labels / "a.png", lab)
        clf_path = tmp_path / "model.clf"
        assert main([
            "weak-train", "--images", str(images), "--labels", str(labels),
            "--features", "deep", "--backend", "synthetic:patch-mean?patch=4",
            "--set", "identity", "--out", str(clf_path),
        ]) == 0
        assert main([
            "weak-apply", "--classifier", str(clf_path), "--images", str(images),
            "--backend", "synthetic:patch-mean?patch=8", "--out", str(tmp_path / "o"),
        ]) == 1


class TestBenchmarkCommand:
    def test_corloc_on_tiny_dataset(self, tmp_path, rng):
        data = tmp_path / "ds"
        data.mkdir()
        for i in range(2):
            img = np.full((32, 32, 3), 20, dtype=np.uint8)
            img[10:26, 10:26] = (220, 180, 60)
            save_png(data / f"im{i}.png", img)
            (data / f"im{i}.boxes.json").write_text(
                json.dumps({"image": f"im{i}", "boxes": [[10, 10, 26, 26]]})
            )
        report_path = tmp_path / "report.json"
        md_path = tmp_path / "report.md"
        code = main([
            "benchmark", "--dataset", str(data), "--task", "corloc",
            "--backend", "synthetic:patch-mean-center?patch=4",
            "--set", "standard:stride=4,distances=1-2,flips=true",
            "--mode", "single", "--clusters", "16",
            "--out", str(report_path), "--markdown-out", str(md_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["corloc"] == 1.0
        assert report["n_images"] == 2
        assert "corloc" in md_path.read_text()


class TestProfileCommand:
    def test_csv_shape_both_modes(self, tmp_path):
        out = tmp_path / "profile.csv"
        code = main([
            "profile", "--lengths", "32,64", "--mode", "both",
            "--set", "standard:stride=4,distances=1-1,flips=false", "--out", str(out),
        ])
        assert code == 0
        rows = list(csv.DictReader(out.read_text().splitlines()))
        assert [(r["mode"], int(r["length"])) for r in rows] == [
            ("sequential", 32), ("sequential", 64), ("batched", 32), ("batched", 64),
        ]
        assert all(float(r["wall_time_s"]) > 0 for r in rows)
        assert all(int(r["peak_mem_bytes"]) > 0 for r in rows)

    def test_wall_time_monotone_at_scaling_sizes(self, tmp_path):
        out = tmp_path / "profile.csv"
        code = main([
            "profile", "--lengths", "64,256", "--mode", "sequential",
            "--set", "standard:stride=4,distances=1-1,flips=false",
            "--repeats", "5", "--out", str(out),
        ])
        assert code == 0
        rows = list(csv.DictReader(out.read_text().splitlines()))
        times = [float(r["wall_time_s"]) for r in rows]
        assert times[0] < times[1]
