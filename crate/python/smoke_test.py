"""Smoke test for the tilerecon Python module.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import json
import math
import random
import sys
import tempfile

import tilerecon


def close(a, b, tol=1e-8):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    rng = random.Random(3)
    cam_a = tilerecon.AffineCamera([1.0, 0.0, 0.0, 0.0, 1.0, 0.1, 5.0, -2.0])
    cam_b = tilerecon.AffineCamera([0.9, 0.1, 0.2, -0.1, 1.0, -0.3, 1.0, 4.0])
    points = [(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0, 10)) for _ in range(30)]
    a = [cam_a.project(p) for p in points]
    b = [cam_b.project(p) for p in points]

    ci, cj, pts, sv, residual = tilerecon.factorize_two_view(a, b)
    assert residual < 1e-12, residual
    assert len(pts) == len(points) and len(sv) == 4
    for p, xa, xb in zip(pts, a, b):
        assert close(ci.project(p), xa, 1e-6) and close(cj.project(p), xb, 1e-6)

    cam = tilerecon.resect_camera(points, a)
    assert close(cam.params(), cam_a.params(), 1e-9), cam

    x = tilerecon.triangulate([cam_a, cam_b], [a[0], b[0]])
    assert close(x, points[0], 1e-6), x

    h = tilerecon.fit_affine_upgrade(pts, points)
    for p, q in zip(pts, points):
        mapped = [sum(h[r][c] * v for c, v in enumerate(p)) + h[r][3] for r in range(3)]
        assert close(mapped, q, 1e-6)

    median, complete = tilerecon.dem_metrics([[1.0, None], [2.5, 4.0]], [[1.5, 1.0], [2.0, 4.0]], 1.0)
    assert math.isclose(median, 0.5) and math.isclose(complete, 75.0), (median, complete)

    try:
        tilerecon.resect_camera(points[:3], a[:3])
    except tilerecon.ReconstructionError as e:
        print("expected failure:", e)
    else:
        raise AssertionError("three points cannot determine an affine camera")

    with tempfile.TemporaryDirectory() as ws:
        config = 'seed = 7\n'
        tilerecon.synthesize(ws, config)
        report = json.loads(tilerecon.run_pipeline(ws, config))
        metrics = next(s for s in report["stages"] if s["stage"] == "eval")["summary"]["metrics"]
        print("pipeline: median %.3g m, completeness %.1f %%" % (metrics["median_error"], metrics["completeness"]))
        assert metrics["completeness"] > 90.0

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
