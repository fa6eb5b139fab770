import numpy as np
import pytest

from featpipe import cas as cas_mod
from featpipe import detect
from featpipe.detect import Box

from oracles import (
    flood_fill_components,
    naive_box_iou,
    naive_corloc,
    naive_mask_iou,
    naive_miou,
)


def make_cas(labels, foreground_ids, d_sem=0.5, lam=1.0):
    labels = np.asarray(labels, dtype=np.int32)
    classes = []
    for cid in np.unique(labels):
        area = int((labels == cid).sum())
        classes.append(
            cas_mod.CasClass(
                id=int(cid),
                area=area,
                attention_mass=area / labels.size,
                rho_a=1.0 / labels.size,
                foreground=int(cid) in foreground_ids,
            )
        )
    return cas_mod.CasMap(labels=labels, classes=tuple(classes), d_sem=d_sem, lam=lam, seed=0)


class TestComponents:
    def test_single_blob(self):
        labels = np.zeros((8, 8), dtype=np.int32)
        labels[2:5, 2:5] = 1
        comps = detect.components(make_cas(labels, {1}))
        labeled, n = comps[1]
        assert n == 1

    def test_diagonal_connectivity(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = mask[1, 1] = True
        _, n8 = detect.label_components(mask, 8)
        _, n4 = detect.label_components(mask, 4)
        assert (n8, n4) == (1, 2)

    def test_checkerboard_four_connect(self):
        mask = np.indices((6, 6)).sum(axis=0) % 2 == 0
        labeled, n = detect.label_components(mask, 4)
        oracle_labels, oracle_n = flood_fill_components(mask, 4)
        assert n == oracle_n == int(mask.sum())
        assert np.array_equal(labeled, oracle_labels)

    def test_matches_flood_fill_on_random_masks(self, rng):
        for _ in range(20):
            mask = rng.random((12, 12)) < 0.4
            for conn in (4, 8):
                labeled, n = detect.label_components(mask, conn)
                want_labels, want_n = flood_fill_components(mask, conn)
                assert n == want_n
                assert np.array_equal(labeled, want_labels)


class TestBoxes:
    def test_single_blob_superbox_dedup(self):
        labels = np.zeros((20, 20), dtype=np.int32)
        labels[4:10, 5:12] = 1
        result = detect.boxes(make_cas(labels, {1}), min_area=1, mode="multi")
        # component box == superbox -> superbox dropped, one box remains
        assert len(result.boxes) == 1
        assert not result.boxes[0].is_superbox
        assert result.boxes[0].box == Box(5, 4, 12, 10)

    def test_two_blobs_one_class_superbox_deduped(self):
        labels = np.zeros((30, 30), dtype=np.int32)
        labels[2:6, 2:6] = 1  # 16 px
        labels[20:29, 20:29] = 1  # 81 px
        result = detect.boxes(make_cas(labels, {1}), min_area=1, mode="multi")
        # superbox coincides with the larger component's box -> dropped
        assert [r.box for r in result.boxes] == [Box(2, 2, 6, 6), Box(20, 20, 29, 29)]
        assert not any(r.is_superbox for r in result.boxes)

    def test_split_object_keeps_superbox(self):
        # one object decomposed into two touching classes: the superbox spans
        # both parts, overlaps neither part's box above 0.8, and is retained
        labels = np.zeros((30, 30), dtype=np.int32)
        labels[5:25, 5:15] = 1
        labels[5:25, 15:25] = 2
        result = detect.boxes(make_cas(labels, {1, 2}), min_area=1, mode="multi")
        supers = [r for r in result.boxes if r.is_superbox]
        assert len(supers) == 1
        assert supers[0].box == Box(5, 5, 25, 25)
        assert len(result.boxes) == 3

    def test_min_area_filters_everything(self):
        labels = np.zeros((10, 10), dtype=np.int32)
        labels[0, 0] = 1
        result = detect.boxes(make_cas(labels, {1}), min_area=50, mode="multi")
        assert result.boxes == []
        assert result.saliency.sum() == 1

    def test_single_mode_returns_superbox_only(self):
        labels = np.zeros((20, 20), dtype=np.int32)
        labels[1:4, 1:4] = 1
        labels[10:18, 10:18] = 2
        result = detect.boxes(make_cas(labels, {1, 2}), min_area=1, mode="single")
        assert len(result.boxes) == 1
        assert result.boxes[0].is_superbox
        assert result.boxes[0].box == Box(10, 10, 18, 18)

    def test_box_tightness(self, rng):
        for _ in range(10):
            labels = np.zeros((16, 16), dtype=np.int32)
            y0, x0 = rng.integers(0, 8, 2)
            y1, x1 = y0 + rng.integers(2, 8), x0 + rng.integers(2, 8)
            labels[y0:y1, x0:x1] = 1
            result = detect.boxes(make_cas(labels, {1}), min_area=1, mode="multi")
            b = result.boxes[0].box
            comp = labels == 1
            assert comp[b.y0 : b.y1, b.x0 : b.x1].any(axis=0).all()
            assert comp[b.y0 : b.y1, b.x0 : b.x1].any(axis=1).all()
            assert not comp[: b.y0].any() and not comp[b.y1 :].any()

    def test_retained_superbox_never_high_iou(self, rng):
        for seed in range(15):
            r = np.random.default_rng(seed)
            labels = (r.random((24, 24)) < 0.3).astype(np.int32)
            if labels.sum() == 0:
                continue
            result = detect.boxes(make_cas(labels, {1}), min_area=1, mode="multi")
            supers = [x for x in result.boxes if x.is_superbox]
            for s in supers:
                for other in result.boxes:
                    if other is not s:
                        assert detect.iou(s.box, other.box) <= 0.8


class TestIou:
    def test_identical(self):
        assert detect.iou(Box(0, 0, 4, 4), Box(0, 0, 4, 4)) == 1.0

    def test_known_overlap(self):
        assert detect.iou(Box(0, 0, 10, 10), Box(5, 5, 15, 15)) == pytest.approx(25 / 175)

    def test_disjoint(self):
        assert detect.iou(Box(0, 0, 2, 2), Box(5, 5, 7, 7)) == 0.0

    def test_mask_iou(self, rng):
        a = rng.random((9, 9)) < 0.5
        b = rng.random((9, 9)) < 0.5
        assert detect.iou(a, b) == pytest.approx(naive_mask_iou(a, b))

    def test_empty_masks_warn_zero(self):
        with pytest.warns(UserWarning, match="empty"):
            assert detect.iou(np.zeros((3, 3), bool), np.zeros((3, 3), bool)) == 0.0

    def test_random_boxes_match_naive(self, rng):
        for _ in range(50):
            def rand_box():
                x0, y0 = rng.integers(0, 12, 2)
                return Box(int(x0), int(y0), int(x0 + rng.integers(1, 8)), int(y0 + rng.integers(1, 8)))

            a, b = rand_box(), rand_box()
            assert detect.iou(a, b) == pytest.approx(
                naive_box_iou(a.to_list(), b.to_list()), abs=1e-12
            )


class TestCorloc:
    def test_perfect(self):
        gt = {"a": [Box(0, 0, 5, 5)], "b": [Box(1, 1, 4, 4)]}
        assert detect.corloc(gt, gt) == 1.0

    def test_half(self):
        gt = {"a": [Box(0, 0, 10, 10)], "b": [Box(0, 0, 10, 10)]}
        preds = {"a": [Box(0, 0, 10, 6)], "b": [Box(0, 9, 10, 19)]}  # 0.6 hit, ~0.05 miss
        assert detect.corloc(preds, gt) == 0.5

    def test_exactly_half_iou_is_miss(self):
        gt = {"a": [Box(0, 0, 2, 1)]}
        preds = {"a": [Box(0, 0, 1, 1)]}  # IoU exactly 0.5
        assert detect.iou(preds["a"][0], gt["a"][0]) == 0.5
        assert detect.corloc(preds, gt) == 0.0

    def test_no_predictions_is_miss(self):
        gt = {"a": [Box(0, 0, 5, 5)], "b": [Box(0, 0, 5, 5)]}
        assert detect.corloc({"a": [Box(0, 0, 5, 5)]}, gt) == 0.5

    def test_missing_ground_truth_raises(self):
        with pytest.raises(ValueError, match="missing ground truth.*extra"):
            detect.corloc({"extra": []}, {"a": [Box(0, 0, 1, 1)]})

    def test_matches_naive_on_random_fixtures(self, rng):
        for _ in range(20):
            gt, preds = {}, {}
            for i in range(rng.integers(1, 6)):
                def boxes_(n):
                    out = []
                    for _ in range(n):
                        x0, y0 = rng.integers(0, 10, 2)
                        out.append(Box(int(x0), int(y0), int(x0 + rng.integers(1, 6)),
                                       int(y0 + rng.integers(1, 6))))
                    return out

                image_id = f"img{i}"
                gt[image_id] = boxes_(rng.integers(1, 4))
                preds[image_id] = boxes_(rng.integers(0, 4))
            want = naive_corloc(
                {k: [b.to_list() for b in v] for k, v in preds.items()},
                {k: [b.to_list() for b in v] for k, v in gt.items()},
            )
            assert detect.corloc(preds, gt) == pytest.approx(want, abs=1e-12)


class TestMiou:
    def test_perfect(self, rng):
        m = rng.integers(0, 3, (8, 8))
        assert detect.miou(m, m, [0, 1, 2]) == 1.0

    def test_half_coverage(self):
        gt = np.zeros((4, 4), dtype=int)
        gt[:, :2] = 1
        pred = np.zeros((4, 4), dtype=int)
        pred[:, :1] = 1
        # class 1: IoU 0.5; class 0: 8/12
        assert detect.miou(pred, gt, [1]) == pytest.approx(0.5)

    def test_three_class_matches_naive(self, rng):
        for _ in range(30):
            pred = rng.integers(0, 4, (7, 7))
            gt = rng.integers(0, 4, (7, 7))
            classes = [0, 1, 2, 3]
            assert detect.miou(pred, gt, classes) == pytest.approx(
                naive_miou(pred, gt, classes), abs=1e-12
            )

    def test_absent_class_skipped(self):
        pred = np.ones((3, 3), dtype=int)
        gt = np.ones((3, 3), dtype=int)
        assert detect.miou(pred, gt, [1, 7]) == 1.0

    def test_empty_class_list_rejected(self):
        with pytest.raises(ValueError, match="empty class list"):
            detect.miou(np.zeros((2, 2)), np.zeros((2, 2)), [])

    def test_accumulator_matches_single_image(self, rng):
        pred = rng.integers(0, 3, (6, 6))
        gt = rng.integers(0, 3, (6, 6))
        acc = detect.MiouAccumulator([0, 1, 2])
        acc.add(pred, gt)
        assert acc.value() == pytest.approx(detect.miou(pred, gt, [0, 1, 2]))


class TestSaliency:
    def test_all_foreground(self):
        labels = np.array([[0, 1], [1, 0]], dtype=np.int32)
        assert detect.saliency(make_cas(labels, {0, 1})).all()

    def test_single_class_mask(self):
        labels = np.array([[0, 1], [1, 0]], dtype=np.int32)
        mask = detect.saliency(make_cas(labels, {1}))
        assert np.array_equal(mask, labels == 1)

    def test_counted_union(self, rng):
        labels = rng.integers(0, 4, (10, 10)).astype(np.int32)
        mask = detect.saliency(make_cas(labels, {1, 3}))
        assert int(mask.sum()) == int(((labels == 1) | (labels == 3)).sum())


class TestReports:
    def test_report_round_trip(self):
        report = detect.make_report(
            "blobs", "single", "corloc", 1.0, 50, 1.0, 0,
            '{"name": "patch-mean", "patch_size": 4, "stride": 4, "hidden_dim": 3}',
        )
        md = detect.report_markdown(report)
        assert "corloc" in md and "1.0000" in md and "patch-mean" in md

    def test_boxes_json_loader(self, tmp_path):
        (tmp_path / "img.boxes.json").write_text('{"image": "img", "boxes": [[0, 1, 4, 5]]}')
        image_id, boxes = detect.load_boxes_json(tmp_path / "img.boxes.json")
        assert image_id == "img"
        assert boxes == [Box(0, 1, 4, 5)]
