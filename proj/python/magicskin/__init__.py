"""MagicSkin tactile image pipeline: simulate, preprocess, mask, track and evaluate."""

import json as _json

try:
    from . import _magicskin as _core
except ImportError:  # in-tree build: extension sits next to the build tree
    import _magicskin as _core

MagicSkinError = _core.MagicSkinError
load_frame = _core.load_frame
save_frame = _core.save_frame
load_sequence = _core.load_sequence
to_gray = _core.to_gray
clahe = _core.clahe
gaussian_blur = _core.gaussian_blur
render_static = _core.render_static
render_translation = _core.render_translation

__all__ = [
    "MagicSkinError",
    "load_frame",
    "save_frame",
    "load_sequence",
    "to_gray",
    "clahe",
    "gaussian_blur",
    "render_static",
    "render_translation",
    "preprocess",
    "pattern",
    "select_mask",
    "detect_keypoints",
    "track",
    "compute_metrics",
    "compute_accuracy",
    "default_corpus_config",
    "plan_corpus",
    "generate_corpus",
]


def _dump(cfg):
    return "" if cfg is None else _json.dumps(cfg)


def preprocess(frame, config=None):
    """Returns {"color", "gray_enhanced", "crop_offset"}."""
    return _core.preprocess(frame, _dump(config))


def pattern(design):
    return _json.loads(_core.pattern_json(design))


def select_mask(frame, design, config=None):
    """Returns (health dict, mask array) for a raw frame."""
    health, bits = _core.mask_health(frame, design, _dump(config))
    return _json.loads(health), bits


def detect_keypoints(frame, design, config=None):
    return _core.detect_keypoints(frame, design, _dump(config))


def track(frames, design, fps=40.0, preprocess_config=None, track_config=None):
    """Tracks a list of HxWx3 uint8 frames; returns the report as a dict."""
    return _json.loads(
        _core.track_frames(list(frames), design, fps, _dump(preprocess_config), _dump(track_config))
    )


def compute_metrics(reports, pooling="per_step"):
    if isinstance(reports, dict):
        reports = [reports]
    return _json.loads(_core.compute_metrics([_json.dumps(r) for r in reports], pooling))


def compute_accuracy(report, truth):
    return _json.loads(_core.compute_accuracy(_json.dumps(report), _json.dumps(truth)))


def default_corpus_config():
    return _json.loads(_core.default_corpus_config())


def plan_corpus(config=None):
    return _core.plan_corpus(_dump(config))


def generate_corpus(config, out_dir, jobs=1):
    _core.generate_corpus(_dump(config), str(out_dir), jobs)
