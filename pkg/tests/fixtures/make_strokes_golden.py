"""Regenerate strokes_golden.json from the stamp-rule definition.

Brute-force enumeration straight from the rule (sample every 0.5 px, snap
round-half-up, stamp an integer disc, clip): the client and the server are
both checked against this frozen file.
"""

import json
import math
import random
from pathlib import Path

WIDTH, HEIGHT = 64, 48


def rule_pixels(points, radius):
    centers = []

    def snap(v):
        return math.floor(v + 0.5)

    centers.append((snap(points[0][0]), snap(points[0][1])))
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        dist = math.hypot(x1 - x0, y1 - y0)
        n = max(1, math.ceil(dist / 0.5))
        for i in range(1, n + 1):
            t = i / n
            centers.append((snap(x0 + (x1 - x0) * t), snap(y0 + (y1 - y0) * t)))
    pixels = set()
    for cx, cy in centers:
        for yy in range(cy - radius, cy + radius + 1):
            for xx in range(cx - radius, cx + radius + 1):
                if (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius:
                    if 0 <= xx < WIDTH and 0 <= yy < HEIGHT:
                        pixels.add((xx, yy))
    return sorted(pixels, key=lambda p: (p[1], p[0]))


def main():
    rnd = random.Random(20240817)
    strokes = []
    # hand-picked edge cases
    strokes.append({"points": [[10.0, 10.0]], "radius": 1, "class_id": 1})
    strokes.append({"points": [[0.0, 0.0]], "radius": 3, "class_id": 2})  # corner clip
    strokes.append({"points": [[63.9, 47.9]], "radius": 4, "class_id": 1})  # far corner
    strokes.append({"points": [[5.5, 5.5], [5.5, 5.5]], "radius": 2, "class_id": 3})
    strokes.append({"points": [[-3.0, 10.0], [8.0, 10.0]], "radius": 2, "class_id": 1})
    while len(strokes) < 25:
        n_points = rnd.randint(1, 6)
        points = [
            [round(rnd.uniform(-4, WIDTH + 4), 3), round(rnd.uniform(-4, HEIGHT + 4), 3)]
            for _ in range(n_points)
        ]
        strokes.append(
            {"points": points, "radius": rnd.randint(1, 6), "class_id": rnd.randint(1, 5)}
        )
    for s in strokes:
        s["pixels"] = [list(p) for p in rule_pixels(s["points"], s["radius"])]
    doc = {"width": WIDTH, "height": HEIGHT, "strokes": strokes}
    out = Path(__file__).parent / "strokes_golden.json"
    out.write_text(json.dumps(doc))
    print(f"wrote {out} with {len(strokes)} strokes")


if __name__ == "__main__":
    main()
