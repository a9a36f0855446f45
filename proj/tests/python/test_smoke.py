import json

import numpy as np
import pytest

import magicskin as ms


def test_preprocess_shapes():
    frame = ms.render_static("grey_squares", seed=3)
    assert frame.shape == (480, 640, 3)
    assert frame.dtype == np.uint8
    pre = ms.preprocess(frame)
    assert pre["gray_enhanced"].shape == (432, 576)
    assert pre["color"].shape == (432, 576, 3)
    assert pre["crop_offset"] == (32, 24)


def test_mask_and_keypoints():
    frame = ms.render_static("grey_squares", seed=3)
    health, bits = ms.select_mask(frame, "grey_squares")
    assert health["passed"]
    assert health["component_count"] == 108
    assert bits.shape == (432, 576)
    squares = len(ms.detect_keypoints(frame, "grey_squares"))
    ink = len(ms.detect_keypoints(ms.render_static("dense_ink", seed=3), "dense_ink"))
    assert squares > ink


def test_track_zero_motion():
    frames = [ms.render_static("grey_squares", seed=5) for _ in range(4)]
    report = ms.track(frames, "grey_squares")
    metrics = ms.compute_metrics(report)
    assert metrics["retention"] == 100.0
    assert metrics["fb_mean"] < 1e-3


def test_translation_recovered():
    a = ms.render_translation("grey_squares", 7, 0.0, 0.0)
    b = ms.render_translation("grey_squares", 7, 0.5, 0.25)
    report = ms.track([a, b], "grey_squares")
    steps = [t["positions"][1][0] - t["positions"][0][0] for t in report["tracks"] if len(t["positions"]) == 2]
    assert abs(np.median(steps) - 0.5) < 0.05


def test_clahe_constant():
    out = ms.clahe(np.full((64, 64), 0.4, dtype=np.float32))
    assert np.all(out == out[0, 0])


def test_errors_raise(tmp_path):
    with pytest.raises(ms.MagicSkinError, match="FileNotFound"):
        ms.load_frame(str(tmp_path / "missing.png"))
    with pytest.raises(ms.MagicSkinError):
        ms.preprocess(np.zeros((480, 640, 3), dtype=np.uint8))


def test_corpus_roundtrip(tmp_path):
    assert len(ms.plan_corpus()) == 180
    cfg = ms.default_corpus_config()
    cfg.update({"variants": [cfg["variants"][3]], "motions": ["horizontal"], "cells": [[1, 1]], "frames": 3})
    ms.generate_corpus(cfg, tmp_path)
    seq_id = ms.plan_corpus(cfg)[0]
    frames, fps = ms.load_sequence(str(tmp_path / seq_id))
    assert len(frames) == 3
    truth = json.loads((tmp_path / seq_id / "truth.json").read_text())
    report = ms.track(frames, "grey_squares", fps)
    acc = ms.compute_accuracy(report, truth)
    assert acc["median_abs_err"] < 0.25
