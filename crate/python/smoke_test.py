"""Smoke test for the manylight_py extension.

Build and install it first:

    pip install --no-build-isolation ./crates/py
"""

import os
import random
import tempfile

import manylight_py as ml


def check_render():
    scene = ml.Scene.cornell_box()
    assert scene.light_count == 1 and scene.triangle_count > 0

    cfg = ml.RenderConfig(mode="bruteforce")
    cfg.width, cfg.height, cfg.vpls, cfg.slice_size = 24, 24, 200, 200
    reference, report = ml.render(cfg, scene)
    assert (reference.width, reference.height) == (24, 24)
    assert report.mode == "bruteforce" and report.vpls == 200

    cfg.mode = "pipeline"
    cfg.rate = 1.0
    image, report = ml.render(cfg, scene)
    err = ml.image_error(image, reference)
    print(f"pipeline at full rate: {err:.2f}% error, {report.rays_per_pixel():.1f} rays/pixel")
    assert err < 100.0
    assert report.to_csv().startswith("slice,")

    brighter, _ = ml.render(cfg, scene.with_light_scale(2.0))
    assert ml.image_error(brighter, image.scaled(2.0)) == 0.0

    with tempfile.TemporaryDirectory() as d:
        raw = image.write(os.path.join(d, "out.ppm"), 1.0)
        back = ml.Image.read_raw(raw)
        # The sidecar holds single-precision floats.
        for a, b in zip(sum(back.pixels(), []), sum(image.pixels(), [])):
            assert all(abs(x - y) <= 1e-6 * max(abs(y), 1e-30) for x, y in zip(a, b))
        scene.save(os.path.join(d, "box.toml"), "box.mesh")
        assert ml.Scene.load(os.path.join(d, "box.toml")).triangle_count == scene.triangle_count


def check_completion():
    rng = random.Random(3)
    rows, cols = 40, 30
    u = [rng.random() for _ in range(rows)]
    v = [rng.random() for _ in range(cols)]
    entries = [(i, j, (u[i] * v[j],) * 3) for i in range(rows) for j in range(cols)]
    full = ml.complete_matrix(rows, cols, entries, rank=1)
    worst = max(abs(full[i][j][0] - u[i] * v[j]) for i in range(rows) for j in range(cols))
    print(f"rank-1 completion max error {worst:.2e}")
    assert worst < 1e-3


def check_errors():
    try:
        ml.RenderConfig(mode="fastest")
    except ValueError as e:
        print(f"rejected: {e}")
    else:
        raise AssertionError("bad mode accepted")
    try:
        ml.Scene.load("/no/such/scene.toml")
    except OSError:
        pass
    else:
        raise AssertionError("missing scene accepted")


if __name__ == "__main__":
    check_render()
    check_completion()
    check_errors()
    print("smoke test passed")
