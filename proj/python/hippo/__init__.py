"""Hippocampus segmentation and longitudinal volumetry."""

import json

from ._core import (
    InputError,
    NiftiError,
    compute_volume,
    continuity_metric,
    default_config_json,
    dice_score,
    fit_timeline,
    generate_phantom,
    iou_score,
    load_volume,
    parameter_count,
    resolved_config_json,
    run,
    save_mask,
    soft_dice_loss,
)

__version__ = "0.1.0"


def default_config():
    """Default run configuration as a nested dict."""
    return json.loads(default_config_json())


def resolve_config(config=None, overrides=()):
    """Defaults, then the optional JSON file, then each "key=value" override."""
    return json.loads(resolved_config_json(config, list(overrides)))


__all__ = [
    "InputError",
    "NiftiError",
    "compute_volume",
    "continuity_metric",
    "default_config",
    "dice_score",
    "fit_timeline",
    "generate_phantom",
    "iou_score",
    "load_volume",
    "parameter_count",
    "resolve_config",
    "run",
    "save_mask",
    "soft_dice_loss",
]
