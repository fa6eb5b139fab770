"""Compact command-line specs for transform sets."""

from __future__ import annotations

import json
from pathlib import Path

from featpipe import geometry


def parse_transform_set(spec: str) -> geometry.TransformSet:
    """Parse a transform-set spec.

    Accepted forms: ``identity``; ``standard:stride=4,neighborhood=moore,
    distances=1-2,flips=true`` (distances as ``a-b`` range or comma list
    ``1:2``); a path to a JSON file; or an inline JSON document.
    """
    spec = spec.strip()
    if spec == "identity":
        return geometry.TransformSet.identity_only()
    if spec.startswith("standard:"):
        opts: dict[str, str] = {}
        for part in spec[len("standard:"):].split(","):
            if not part:
                continue
            key, _, value = part.partition("=")
            opts[key.strip()] = value.strip()
        if "stride" not in opts:
            raise ValueError(f"standard set spec needs stride=<S>: {spec!r}")
        stride = int(opts["stride"])
        distances = None
        if "distances" in opts:
            text = opts["distances"]
            if "-" in text:
                lo, hi = text.split("-")
                distances = list(range(int(lo), int(hi) + 1))
            else:
                distances = [int(d) for d in text.split(":") if d]
        flips = opts.get("flips", "true").lower() in ("1", "true", "yes")
        return geometry.standard_transform_set(
            stride=stride,
            neighborhood=opts.get("neighborhood", "moore"),
            distances=distances,
            flips=flips,
        )
    if spec.startswith("{"):
        return geometry.TransformSet.from_json(spec)
    path = Path(spec)
    if path.exists():
        return geometry.TransformSet.from_json(path.read_text())
    raise ValueError(f"cannot parse transform-set spec {spec!r}")


def parse_json_maybe_file(spec: str) -> dict:
    path = Path(spec)
    if path.exists():
        return json.loads(path.read_text())
    return json.loads(spec)
