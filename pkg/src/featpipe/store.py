"""Data ingestion, geometry conforming, feature caching and session state.

Everything written to disk goes through write-temp-then-rename, so readers
never observe partial files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from featpipe.detect import Box
from featpipe.featurize.io import read_fmap, write_fmap
from featpipe.featurize.types import BackendDescriptor
from featpipe.geometry import TransformSet

logger = logging.getLogger(__name__)

_IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass(frozen=True)
class DatasetEntry:
    image_id: str
    image_path: Path
    boxes_path: Path | None = None
    mask_path: Path | None = None
    split: str = "eval"


@dataclass
class Dataset:
    root: Path
    entries: list[DatasetEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.image_id for e in self.entries]

    def entry(self, image_id: str) -> DatasetEntry:
        for e in self.entries:
            if e.image_id == image_id:
                return e
        raise KeyError(f"unknown image id {image_id!r}")

    def load_image(self, image_id: str) -> np.ndarray:
        return np.asarray(Image.open(self.entry(image_id).image_path))

    def load_boxes(self, image_id: str) -> list[Box]:
        e = self.entry(image_id)
        if e.boxes_path is None:
            return []
        if e.boxes_path.suffix == ".xml":
            return _parse_voc_boxes(e.boxes_path)
        doc = json.loads(e.boxes_path.read_text())
        return [Box(*[int(v) for v in b]) for b in doc["boxes"]]

    def load_mask(self, image_id: str) -> np.ndarray | None:
        e = self.entry(image_id)
        if e.mask_path is None:
            return None
        return np.asarray(Image.open(e.mask_path))


def _parse_voc_boxes(path: Path) -> list[Box]:
    """VOC XML: 1-based inclusive corners -> 0-based half-open boxes."""
    import xml.etree.ElementTree as ET

    root = ET.parse(path).getroot()
    out = []
    for obj in root.findall("object"):
        bb = obj.find("bndbox")
        if bb is None:
            continue
        xmin = int(float(bb.findtext("xmin")))
        ymin = int(float(bb.findtext("ymin")))
        xmax = int(float(bb.findtext("xmax")))
        ymax = int(float(bb.findtext("ymax")))
        out.append(Box(xmin - 1, ymin - 1, xmax, ymax))
    return out


def ingest(path: str | Path, layout: str = "flat", strict: bool = False) -> Dataset:
    """Index a directory of images with optional boxes/masks.

    ``flat``: ``<id>.<ext>`` images with ``<id>.boxes.json`` and
    ``<id>.mask.png`` siblings. ``voc_like``: ``JPEGImages/``,
    ``Annotations/<id>.xml``, ``SegmentationClass/<id>.png``. Unreadable
    files are skipped with a warning, or raise when ``strict``.
    """
    root = Path(path)
    if not root.is_dir():
        raise ValueError(f"not a readable directory: {root}")
    if layout not in ("flat", "voc_like"):
        raise ValueError(f"layout must be 'flat' or 'voc_like', got {layout!r}")

    if layout == "flat":
        image_dir, ann_dir, mask_dir = root, root, root
    else:
        image_dir = root / "JPEGImages"
        ann_dir = root / "Annotations"
        mask_dir = root / "SegmentationClass"
        if not image_dir.is_dir():
            raise ValueError(f"voc_like layout needs {image_dir}")

    bad: list[str] = []
    entries: list[DatasetEntry] = []
    for img in sorted(image_dir.iterdir()):
        if img.suffix.lower() not in _IMAGE_EXTS or img.name.endswith(".mask.png"):
            continue
        try:
            with Image.open(img) as im:
                im.verify()
        except Exception as exc:
            bad.append(f"{img}: {exc}")
            continue
        stem = img.stem
        if layout == "flat":
            boxes = ann_dir / f"{stem}.boxes.json"
            mask = mask_dir / f"{stem}.mask.png"
        else:
            boxes = ann_dir / f"{stem}.xml"
            mask = mask_dir / f"{stem}.png"
        entries.append(
            DatasetEntry(
                image_id=stem,
                image_path=img,
                boxes_path=boxes if boxes.exists() else None,
                mask_path=mask if mask.exists() else None,
            )
        )
    if bad:
        if strict:
            raise ValueError("corrupt or unreadable files:\n  " + "\n  ".join(bad))
        warnings.warn(f"skipped {len(bad)} unreadable file(s): {bad}", stacklevel=2)
    entries.sort(key=lambda e: e.image_id)
    return Dataset(root=root, entries=entries)


@dataclass(frozen=True)
class ConformMapping:
    """Bookkeeping to map predictions back to native resolution."""

    original: tuple[int, int]
    resized: tuple[int, int]  # after scaling, before padding
    padded: tuple[int, int]

    @property
    def is_identity(self) -> bool:
        return self.original == self.padded and self.original == self.resized

    def map_back(self, mask: np.ndarray) -> np.ndarray:
        """Crop padding and nearest-resize a mask to the original size."""
        if mask.shape[:2] != self.padded:
            raise ValueError(f"mask shape {mask.shape[:2]} != conformed {self.padded}")
        rh, rw = self.resized
        cropped = mask[:rh, :rw]
        return _resize_nearest(cropped, self.original)


def _resize_nearest(mask: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h, w = mask.shape[:2]
    th, tw = size
    if (h, w) == (th, tw):
        return mask.copy()
    rows = (np.arange(th, dtype=np.int64) * h) // th
    cols = (np.arange(tw, dtype=np.int64) * w) // tw
    return mask[np.ix_(rows, cols)]


def _resize_bilinear(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    th, tw = size
    if image.shape[:2] == (th, tw):
        return image.copy()
    if image.dtype == np.uint8:
        pil = Image.fromarray(image)
        return np.asarray(pil.resize((tw, th), Image.BILINEAR))
    img = image[:, :, None] if image.ndim == 2 else image
    planes = [
        np.asarray(Image.fromarray(img[:, :, c].astype(np.float32), mode="F").resize(
            (tw, th), Image.BILINEAR))
        for c in range(img.shape[2])
    ]
    out = np.stack(planes, axis=-1)
    return out[:, :, 0] if image.ndim == 2 else out


def conform(
    image: np.ndarray, descriptor: BackendDescriptor, is_mask: bool = False
) -> tuple[np.ndarray, ConformMapping]:
    """Resize/pad an image to the backend's constraints.

    With a declared working size, the long side is scaled to it (bilinear
    for images, nearest for masks); either way dimensions are edge-padded up
    to the backend's divisibility multiple. Returns the mapping needed to
    bring predictions back to native resolution.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if h == 0 or w == 0:
        raise ValueError("zero-dimension image")
    if descriptor.working_size:
        s = descriptor.working_size / max(h, w)
        rh, rw = max(1, round(h * s)), max(1, round(w * s))
    else:
        rh, rw = h, w
    resized = (
        _resize_nearest(image, (rh, rw)) if is_mask else _resize_bilinear(image, (rh, rw))
    )
    m = max(1, descriptor.multiple_of)
    ph = -rh % m
    pw = -rw % m
    if ph or pw:
        pad = [(0, ph), (0, pw)] + [(0, 0)] * (image.ndim - 2)
        resized = np.pad(resized, pad, mode="edge")
    return resized, ConformMapping(original=(h, w), resized=(rh, rw), padded=(rh + ph, rw + pw))


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_label_png(path: str | Path, labels: np.ndarray) -> None:
    """Indexed PNG, palette index 0 = unlabeled."""
    labels = np.asarray(labels)
    if labels.max(initial=0) > 255 or labels.min(initial=0) < 0:
        raise ValueError("label values must fit in a PNG palette (0..255)")
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    img.putpalette(_default_palette().ravel().tolist())
    import io as _io

    buf = _io.BytesIO()
    img.save(buf, format="PNG")
    _atomic_write_bytes(Path(path), buf.getvalue())


def load_label_png(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path)).astype(np.int32)


def _default_palette() -> np.ndarray:
    rng = np.random.default_rng(11)
    palette = rng.integers(40, 255, size=(256, 3), dtype=np.uint8)
    palette[0] = (0, 0, 0)
    palette[1] = (230, 60, 60)
    palette[2] = (60, 120, 230)
    palette[3] = (60, 200, 90)
    palette[4] = (240, 200, 60)
    return palette


class FeatureCache:
    """Content-addressed FMAP cache keyed by image bytes, backend descriptor
    and transform set. Lookups verify a payload checksum; corrupt entries
    are discarded as misses."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(image: np.ndarray, descriptor: BackendDescriptor, tset: TransformSet, role: str) -> str:
        image = np.ascontiguousarray(image)
        h = hashlib.sha256()
        h.update(str(image.shape).encode())
        h.update(str(image.dtype).encode())
        h.update(image.tobytes())
        h.update(descriptor.to_json().encode())
        h.update(tset.to_json().encode())
        h.update(role.encode())
        return h.hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.fmap"

    def store(self, key: str, data: np.ndarray, provenance: dict | None = None) -> Path:
        data = np.asarray(data)
        payload = np.ascontiguousarray(
            data if data.ndim == 3 else data[:, :, None], dtype=np.float32
        )
        prov = dict(provenance or {})
        prov["payload_sha256"] = hashlib.sha256(payload.tobytes()).hexdigest()
        path = self._path(key)
        write_fmap(path, payload, prov)
        return path

    def lookup(self, key: str) -> np.ndarray | None:
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            logger.info("feature cache miss %s", key[:12])
            return None
        try:
            data, prov = read_fmap(path)
        except Exception:
            path.unlink(missing_ok=True)
            self.misses += 1
            logger.warning("feature cache entry %s unreadable; discarded", key[:12])
            return None
        want = (prov or {}).get("payload_sha256")
        got = hashlib.sha256(np.ascontiguousarray(data).tobytes()).hexdigest()
        if want != got:
            path.unlink(missing_ok=True)
            self.misses += 1
            logger.warning("feature cache entry %s failed checksum; discarded", key[:12])
            return None
        self.hits += 1
        logger.info("feature cache hit %s", key[:12])
        return data

    def store_pair(
        self,
        image: np.ndarray,
        descriptor: BackendDescriptor,
        tset: TransformSet,
        features: np.ndarray,
        attention: np.ndarray,
    ) -> None:
        self.store(self.key(image, descriptor, tset, "features"), features)
        self.store(self.key(image, descriptor, tset, "attention"), attention)

    def lookup_pair(
        self, image: np.ndarray, descriptor: BackendDescriptor, tset: TransformSet
    ) -> tuple[np.ndarray | None, np.ndarray | None]:
        feats = self.lookup(self.key(image, descriptor, tset, "features"))
        attn = self.lookup(self.key(image, descriptor, tset, "attention"))
        if attn is not None:
            attn = attn[:, :, 0]
        return feats, attn


class Session:
    """On-disk state for one labeling session.

    Layout: ``config.json``, ``images/``, ``features/<hash>.fmap``,
    ``labels/<image>.png``, ``classifiers/<n>.clf``,
    ``predictions/<image>.png``.
    """

    def __init__(self, root: str | Path, session_id: str):
        self.id = session_id
        self.root = Path(root) / session_id
        self.cache = FeatureCache(self.root / "features")

    @staticmethod
    def create(root: str | Path, session_id: str, config: dict | None = None) -> "Session":
        if (Path(root) / session_id).exists():
            raise FileExistsError(f"session {session_id!r} already exists")
        s = Session(root, session_id)
        for sub in ("images", "features", "labels", "classifiers", "predictions"):
            (s.root / sub).mkdir(parents=True, exist_ok=True)
        _atomic_write_bytes(
            s.root / "config.json", json.dumps(config or {}, sort_keys=True).encode()
        )
        return s

    @staticmethod
    def open(root: str | Path, session_id: str) -> "Session":
        s = Session(root, session_id)
        if not (s.root / "config.json").exists():
            raise FileNotFoundError(f"no session {session_id!r} under {root}")
        return s

    @property
    def config(self) -> dict:
        return json.loads((self.root / "config.json").read_text())

    def add_image(self, image_id: str, png_bytes: bytes) -> Path:
        path = self.root / "images" / f"{image_id}.png"
        _atomic_write_bytes(path, png_bytes)
        return path

    def load_image(self, image_id: str) -> np.ndarray:
        path = self.root / "images" / f"{image_id}.png"
        if not path.exists():
            raise KeyError(f"unknown image {image_id!r}")
        return np.asarray(Image.open(path))

    def image_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "images").glob("*.png"))

    def save_labels(self, image_id: str, labels: np.ndarray) -> None:
        save_label_png(self.root / "labels" / f"{image_id}.png", labels)

    def load_labels(self, image_id: str) -> np.ndarray | None:
        path = self.root / "labels" / f"{image_id}.png"
        return load_label_png(path) if path.exists() else None

    def labeled_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "labels").glob("*.png"))

    def classifier_versions(self) -> list[int]:
        return sorted(int(p.stem) for p in (self.root / "classifiers").glob("*.clf"))

    def classifier_path(self, version: int) -> Path:
        return self.root / "classifiers" / f"{version}.clf"

    def next_classifier_version(self) -> int:
        versions = self.classifier_versions()
        return (versions[-1] + 1) if versions else 1

    def save_prediction(self, image_id: str, labels: np.ndarray) -> None:
        save_label_png(self.root / "predictions" / f"{image_id}.png", labels)

    def load_prediction(self, image_id: str) -> np.ndarray | None:
        path = self.root / "predictions" / f"{image_id}.png"
        return load_label_png(path) if path.exists() else None
