"""Smoke test for the `dirlearn` Python extension.

Build first with `cargo build --release -p dirlearn-py` (or `maturin develop`
inside crates/python), then run `python python/smoke_test.py` or pytest.
"""

import importlib
import json
import math
import os
import shutil
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def _load():
    try:
        return importlib.import_module("dirlearn")
    except ImportError:
        pass
    candidates = [os.environ.get("DIRLEARN_LIB")]
    for profile in ("release", "debug"):
        for name in ("libdirlearn_py.so", "libdirlearn_py.dylib", "dirlearn_py.dll"):
            candidates.append(str(ROOT / "target" / profile / name))
    lib = next((c for c in candidates if c and os.path.exists(c)), None)
    if lib is None:
        raise ImportError("build the extension with `cargo build --release -p dirlearn-py` first")
    where = tempfile.mkdtemp(prefix="dirlearn_py_")
    shutil.copy(lib, os.path.join(where, "dirlearn" + sysconfig.get_config_var("EXT_SUFFIX")))
    sys.path.insert(0, where)
    return importlib.import_module("dirlearn")


dl = _load()


def test_image_roundtrip():
    img = dl.Image.uniform(16, 12, [0.2, 0.4, 0.6])
    assert (img.height, img.width) == (16, 12)
    data = img.data()
    assert len(data) == 3 * 16 * 12
    assert abs(data[0] - 0.2) < 1e-12 and abs(data[-1] - 0.6) < 1e-12
    same = dl.Image(16, 12, data)
    assert math.isinf(dl.psnr(img, same))
    assert abs(dl.ssim(img, same) - 1.0) < 1e-9
    try:
        dl.Image(16, 12, data[:-1])
    except ValueError as e:
        assert "dimension" in str(e)
    else:
        raise AssertionError("short buffer accepted")


def test_degradation_is_seeded_and_in_range():
    _, _, clean = dl.toy_corpus(1, 4, 3)[0]
    a, params = dl.degrade(clean, "dark", 7)
    b, _ = dl.degrade(clean, "dark", 7)
    assert a.data() == b.data()
    assert 0.15 <= params["gauss_sigma"] <= 0.35
    assert 50 <= params["jpeg_qf"] <= 95
    (x1, _), (x2, _) = dl.make_pair(clean, "default", 1)
    assert x1.data() != x2.data()


def test_gaussian_helpers():
    assert abs(dl.gaussian_kl([0.0], [0.0], [0.0], [0.0])) < 1e-15
    mean, logvar = dl.poe([0.0], [0.0], [0.0], [0.0])
    assert mean == [0.0] and abs(logvar[0] - math.log(0.5)) < 1e-12
    assert abs(dl.jsd_bound([0.0] * 4, [0.0] * 4) + 2 * math.log(2)) < 1e-9


def test_grad_check_passes():
    report = dl.grad_check("loss_dir", 1e-4, 0)
    assert report["passed"], report
    assert report["n_checked"] > 0


def test_tiny_training_and_model():
    model_cfg = json.dumps(
        {
            "encoder": {"base_width": 2, "latent_channels": 4},
            "alignment": {"m1": 2, "m2": 2, "m3": 2, "k": 2},
        }
    )
    corpus = dl.toy_corpus(6, 4, 0)
    images = [s[2] for s in corpus]
    labels = [s[1] for s in corpus]
    with tempfile.TemporaryDirectory() as out:
        s1 = dl.train_stage1(images, out, model_cfg, json.dumps({"max_epochs": 1, "batch_size": 3}))
        assert s1["epochs_done"] == 1
        before = dl.Model.load(s1["checkpoint"]).checksum("dir_encoder")
        s2 = dl.train_stage2(
            images, labels, s1["checkpoint"], out, json.dumps({"max_epochs": 1, "batch_size": 3})
        )
        model = dl.Model.load(s2["checkpoint"])
        assert model.checksum("dir_encoder") == before
        restored = model.restore(images[:2], "full")
        assert len(restored) == 2 and restored[0].height == 64
        latents = model.encode(images[:2], "dfr_encoder")
        assert len(latents) == 2 and all(math.isfinite(v) for v in latents[0])
        acc = model.accuracy(images, labels)
        assert 0.0 <= acc <= 1.0
        try:
            dl.train_stage2(images, labels, os.path.join(out, "missing.ckpt"), out)
        except ValueError as e:
            assert "stage 1" in str(e)
        else:
            raise AssertionError("missing checkpoint accepted")


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_") and callable(v)]
    for t in tests:
        t()
        print(f"ok  {t.__name__}")
    print(f"{len(tests)} passed")
