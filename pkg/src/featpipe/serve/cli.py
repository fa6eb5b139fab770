"""Command-line entry points.

Exit codes: 0 success, 1 validation error (bad flags, config, input
schemas), 2 runtime failure. Output files are written atomically so failed
runs never leave partial artifacts behind.
"""

from __future__ import annotations

import csv
import io
import json
import sys
import time
import tracemalloc
from pathlib import Path

import click
import numpy as np
from PIL import Image

from featpipe import cas as cas_mod
from featpipe import detect, pixelclf, store
from featpipe.featurize import get_backend, pca_rgb, upsample, write_fmap
from featpipe.featurize.types import FeatureMap
from featpipe.serve.config import ConfigError, load_config
from featpipe.serve.specs import parse_transform_set


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _save_png(path: Path, array: np.ndarray) -> None:
    img = Image.fromarray(array)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def _load_image(path: str) -> np.ndarray:
    return np.asarray(Image.open(path))


def _segment_image(image, backend, tset, lam, seed, clusters, mode):
    fm, am = upsample(backend, image, tset, mode=mode)
    return cas_mod.segment(fm, am, n_clusters=min(clusters, image.shape[0] * image.shape[1]),
                           seed=seed, lam=lam)


@click.group()
def cli() -> None:
    """Dense visual features: upsampling, unsupervised segmentation, weak labeling."""


@cli.command("upsample")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", default="synthetic:patch-mean?patch=4")
@click.option("--set", "set_spec", default="identity", help="transform-set spec")
@click.option("--mode", type=click.Choice(["sequential", "batched"]), default="sequential")
@click.option("--out", required=True, type=click.Path())
@click.option("--attention-out", type=click.Path(), default=None)
@click.option("--pca-out", type=click.Path(), default=None, help="also write a PCA PNG")
def upsample_cmd(image_path, backend_spec, set_spec, mode, out, attention_out, pca_out):
    """Write dense features (FMAP) for one image."""
    backend = get_backend(backend_spec)
    tset = parse_transform_set(set_spec)
    image = _load_image(image_path)
    fm, am = upsample(backend, image, tset, mode=mode, image_id=Path(image_path).stem)
    write_fmap(out, fm.data, fm.provenance)
    if attention_out:
        write_fmap(attention_out, am.data[:, :, None], am.provenance)
    if pca_out:
        rgb = (pca_rgb(fm) * 255).astype(np.uint8)
        _save_png(Path(pca_out), rgb)
    click.echo(f"wrote {out} ({fm.data.shape[0]}x{fm.data.shape[1]}x{fm.data.shape[2]})")


@cli.command("pca")
@click.option("--fmap", "fmap_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def pca_cmd(fmap_path, out):
    """3-component PCA image of a stored FMAP."""
    from featpipe.featurize import read_fmap

    data, prov = read_fmap(fmap_path)
    rgb = (pca_rgb(FeatureMap(data.astype(np.float32), prov or {})) * 255).astype(np.uint8)
    _save_png(Path(out), rgb)
    click.echo(f"wrote {out}")


@cli.command("unsup-detect")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", default="synthetic:patch-mean-center?patch=4")
@click.option("--set", "set_spec", default="standard:stride=4,distances=1-2,flips=true")
@click.option("--lambda", "lam", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--clusters", default=80, show_default=True)
@click.option("--mode", type=click.Choice(["single", "multi"]), default="multi")
@click.option("--out", required=True, type=click.Path())
def unsup_detect_cmd(image_path, backend_spec, set_spec, lam, seed, clusters, mode, out):
    """Unsupervised object boxes for one image (JSON)."""
    backend = get_backend(backend_spec)
    tset = parse_transform_set(set_spec)
    image = _load_image(image_path)
    cas = _segment_image(image, backend, tset, lam, seed, clusters, "sequential")
    result = detect.boxes(cas, mode=mode)
    doc = {
        "image": Path(image_path).stem,
        "boxes": [
            {
                "box": r.box.to_list(),
                "class_id": r.class_id,
                "area": r.component_area,
                "superbox": r.is_superbox,
            }
            for r in result.boxes
        ],
        "lambda": lam,
        "seed": seed,
    }
    _atomic_write_text(Path(out), json.dumps(doc, indent=2))
    click.echo(f"wrote {out} ({len(result.boxes)} boxes)")


@cli.command("unsup-saliency")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", default="synthetic:patch-mean-center?patch=4")
@click.option("--set", "set_spec", default="standard:stride=4,distances=1-2,flips=true")
@click.option("--lambda", "lam", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--clusters", default=80, show_default=True)
@click.option("--out", required=True, type=click.Path())
def unsup_saliency_cmd(image_path, backend_spec, set_spec, lam, seed, clusters, out):
    """Foreground saliency mask for one image (PNG, 0/255)."""
    backend = get_backend(backend_spec)
    tset = parse_transform_set(set_spec)
    image = _load_image(image_path)
    cas = _segment_image(image, backend, tset, lam, seed, clusters, "sequential")
    mask = detect.saliency(cas)
    _save_png(Path(out), (mask * 255).astype(np.uint8))
    click.echo(f"wrote {out}")


@cli.command("benchmark")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--layout", type=click.Choice(["flat", "voc_like"]), default="flat")
@click.option("--task", type=click.Choice(["corloc", "saliency"]), default="corloc")
@click.option("--backend", "backend_spec", default="synthetic:patch-mean-center?patch=4")
@click.option("--set", "set_spec", default="standard:stride=4,distances=1-2,flips=true")
@click.option("--mode", type=click.Choice(["single", "multi"]), default="single")
@click.option("--lambda", "lam", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--clusters", default=80, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--markdown-out", type=click.Path(), default=None)
def benchmark_cmd(dataset_path, layout, task, backend_spec, set_spec, mode, lam, seed,
                  clusters, out, markdown_out):
    """Run the unsupervised pipeline over a dataset and score it."""
    backend = get_backend(backend_spec)
    tset = parse_transform_set(set_spec)
    ds = store.ingest(dataset_path, layout=layout)
    if len(ds) == 0:
        raise click.UsageError(f"dataset {dataset_path} has no images")

    if task == "corloc":
        preds: dict[str, list[detect.Box]] = {}
        gt: dict[str, list[detect.Box]] = {}
        for image_id in ds.ids():
            gt_boxes = ds.load_boxes(image_id)
            if not gt_boxes:
                raise click.UsageError(f"image {image_id} has no ground-truth boxes")
            gt[image_id] = gt_boxes
            image = ds.load_image(image_id)
            cas = _segment_image(image, backend, tset, lam, seed, clusters, "sequential")
            preds[image_id] = [r.box for r in detect.boxes(cas, mode=mode).boxes]
        value = detect.corloc(preds, gt)
        metric = "corloc"
    else:
        ious = []
        for image_id in ds.ids():
            gt_mask = ds.load_mask(image_id)
            if gt_mask is None:
                raise click.UsageError(f"image {image_id} has no ground-truth mask")
            image = ds.load_image(image_id)
            cas = _segment_image(image, backend, tset, lam, seed, clusters, "sequential")
            ious.append(detect.iou(detect.saliency(cas), gt_mask > 0))
        value = float(np.mean(ious))
        metric = "saliency_iou"

    report = detect.make_report(
        dataset=str(dataset_path), mode=mode, metric_name=metric, value=value,
        n_images=len(ds), lam=lam, seed=seed,
        backend_descriptor=backend.descriptor.to_json(),
    )
    _atomic_write_text(Path(out), json.dumps(report, indent=2))
    if markdown_out:
        _atomic_write_text(Path(markdown_out), detect.report_markdown(report))
    click.echo(f"{metric}: {value:.4f} over {len(ds)} images -> {out}")


def _recipe_from_flags(sources, backend_spec, set_spec, include_attention):
    sources = tuple(sources.split("+"))
    backend = get_backend(backend_spec) if "deep" in sources else None
    tset = parse_transform_set(set_spec) if "deep" in sources else None
    recipe = pixelclf.make_recipe(
        sources, backend=backend, transform_set=tset, include_attention=include_attention
    )
    return backend, recipe


@cli.command("weak-train")
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_dir", required=True, type=click.Path(exists=True),
              help="directory of <image-id>.png indexed label masks (0 = unlabeled)")
@click.option("--features", "sources", default="deep",
              help="deep | classical | deep+classical")
@click.option("--backend", "backend_spec", default="synthetic:patch-mean?patch=4")
@click.option("--set", "set_spec", default="standard:stride=4,distances=1-2,flips=true")
@click.option("--include-attention", is_flag=True, default=False)
@click.option("--kind", type=click.Choice(["logistic", "random_forest"]), default=None,
              help="default: logistic for deep/hybrid, random_forest for classical")
@click.option("--c-reg", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def weak_train_cmd(images_dir, labels_dir, sources, backend_spec, set_spec,
                   include_attention, kind, c_reg, seed, out):
    """Train a pixel classifier from sparse label masks."""
    backend, recipe = _recipe_from_flags(sources, backend_spec, set_spec, include_attention)
    if kind is None:
        kind = "random_forest" if recipe.sources == ("classical",) else "logistic"
    ds = store.ingest(images_dir, layout="flat")
    xs, ys = [], []
    for image_id in ds.ids():
        label_path = Path(labels_dir) / f"{image_id}.png"
        if not label_path.exists():
            continue
        labels = store.load_label_png(label_path)
        image = ds.load_image(image_id)
        if labels.shape[:2] != image.shape[:2]:
            raise click.UsageError(
                f"{image_id}: label shape {labels.shape[:2]} != image {image.shape[:2]}"
            )
        stack = pixelclf.build_feature_stack(image, recipe, backend=backend, image_id=image_id)
        mask = labels > 0
        xs.append(stack[mask])
        ys.append(labels[mask])
    if not xs:
        raise click.UsageError(f"no label masks matching images found in {labels_dir}")
    clf = pixelclf.train(
        np.concatenate(xs), np.concatenate(ys), kind=kind, recipe=recipe,
        seed=seed, c_reg=c_reg,
    )
    pixelclf.save_classifier(clf, out)
    click.echo(f"trained {kind} on {sum(len(y) for y in ys)} pixels -> {out}")


@cli.command("weak-apply")
@click.option("--classifier", "clf_path", required=True, type=click.Path(exists=True))
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", default=None,
              help="must match the training backend; defaults to the archived recipe")
@click.option("--smooth-radius", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def weak_apply_cmd(clf_path, images_dir, backend_spec, smooth_radius, out_dir):
    """Apply a trained classifier to every image in a directory."""
    clf = pixelclf.load_classifier(clf_path)
    recipe = pixelclf.FeatureRecipe.from_json(clf.recipe_json) if clf.recipe_json else None
    if recipe is None:
        raise click.UsageError("classifier archive has no feature recipe")
    backend = None
    if "deep" in recipe.sources:
        if backend_spec is not None:
            backend = get_backend(backend_spec)
            if backend.descriptor.to_json() != recipe.backend:
                raise click.UsageError(
                    "backend does not match the training recipe:\n"
                    f"  recipe:  {recipe.backend}\n"
                    f"  backend: {backend.descriptor.to_json()}"
                )
        else:
            raise click.UsageError("deep recipe needs --backend matching training")
    ds = store.ingest(images_dir, layout="flat")
    out_root = Path(out_dir)
    for image_id in ds.ids():
        image = ds.load_image(image_id)
        stack = pixelclf.build_feature_stack(image, recipe, backend=backend, image_id=image_id)
        labels, probs = pixelclf.predict(clf, stack, recipe=recipe)
        if smooth_radius > 0:
            labels = pixelclf.smooth(labels, probs, radius=smooth_radius, classes=clf.classes)
        store.save_label_png(out_root / f"{image_id}.png", labels)
    click.echo(f"predicted {len(ds)} images -> {out_dir}")


@cli.command("profile")
@click.option("--lengths", default="64,128,256", show_default=True,
              help="comma-separated square image edge lengths")
@click.option("--mode", "modes", default="sequential",
              help="sequential | batched | both")
@click.option("--backend", "backend_spec", default="synthetic:patch-mean?patch=4")
@click.option("--set", "set_spec", default="standard:stride=4,distances=1-1,flips=false")
@click.option("--repeats", default=3, show_default=True, help="wall time is the best of N runs")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def profile_cmd(lengths, modes, backend_spec, set_spec, repeats, seed, out):
    """Sweep image sizes and record wall time / peak memory per mode (CSV)."""
    try:
        sizes = [int(v) for v in lengths.split(",") if v]
    except ValueError:
        raise click.UsageError(f"bad --lengths {lengths!r}")
    if not sizes:
        raise click.UsageError("need at least one length")
    if repeats < 1:
        raise click.UsageError("--repeats must be >= 1")
    mode_list = ["sequential", "batched"] if modes == "both" else [modes]
    for m in mode_list:
        if m not in ("sequential", "batched"):
            raise click.UsageError(f"bad --mode {modes!r}")
    backend = get_backend(backend_spec)
    tset = parse_transform_set(set_spec)
    rng = np.random.default_rng(seed)

    rows = []
    for mode in mode_list:
        for length in sizes:
            image = rng.integers(
                0, 256, size=(length, length, backend.descriptor.hidden_dim), dtype=np.uint8
            )
            upsample(backend, image, tset, mode=mode)  # warm any lazy state
            wall = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                upsample(backend, image, tset, mode=mode)
                wall = min(wall, time.perf_counter() - t0)
            # separate traced pass: tracemalloc inflates wall time
            tracemalloc.start()
            upsample(backend, image, tset, mode=mode)
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
            rows.append({"length": length, "mode": mode,
                         "wall_time_s": f"{wall:.6f}", "peak_mem_bytes": peak})

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["length", "mode", "wall_time_s", "peak_mem_bytes"])
    writer.writeheader()
    writer.writerows(rows)
    _atomic_write_text(Path(out), buf.getvalue())
    click.echo(f"wrote {out} ({len(rows)} rows)")


@cli.command("serve")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve_cmd(config_path, host, port):
    """Run the HTTP labeling service."""
    import uvicorn

    from featpipe.serve.api import create_app

    cfg = load_config(config_path)
    if host:
        cfg.host = host
    if port:
        cfg.port = port
    cfg.validate()
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the 0/1/2 exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except (ConfigError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # runtime failure
        click.echo(f"runtime failure: {type(exc).__name__}: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
