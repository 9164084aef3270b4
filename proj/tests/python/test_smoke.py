import json

import numpy as np
import pytest

import hippo


def test_overlap_scores():
    a = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    b = np.array([[1, 0], [1, 0]], dtype=np.uint8)
    assert hippo.dice_score(a, b) == pytest.approx(0.5)
    assert hippo.iou_score(a, b) == pytest.approx(1 / 3)
    empty = np.zeros((2, 2), dtype=np.uint8)
    assert hippo.dice_score(empty, empty) == 1.0
    with pytest.raises(ValueError):
        hippo.dice_score(a, np.zeros(3, dtype=np.uint8))


def test_soft_dice():
    p = np.full(4, 0.5)
    t = np.array([1.0, 0.0, 0.0, 0.0])
    assert hippo.soft_dice_loss(p, t, 0.0) == pytest.approx(1 - 1.0 / 3.0)


def test_fit_timeline():
    fit = hippo.fit_timeline([0, 1], [100.0, 90.0])
    assert fit["slope"] == -10.0
    assert fit["rms_error"] == 0.0
    assert fit["percent_annual_change"] == pytest.approx(-10.0)
    t = np.array([0.0, 1.0, 2.0, 3.0])
    v = np.array([10.0, 12.0, 11.0, 15.0])
    slope, intercept = np.polyfit(t, v, 1)
    fit = hippo.fit_timeline(t, v)
    assert fit["slope"] == pytest.approx(slope, abs=1e-9)
    assert fit["intercept"] == pytest.approx(intercept, abs=1e-9)
    with pytest.raises(ValueError):
        hippo.fit_timeline([1.0], [2.0])


def test_phantom_and_nifti_round_trip(tmp_path):
    series = hippo.generate_phantom(n_timepoints=2, annual_shrink_fraction=0.03, seed=1)
    assert [s[0] for s in series] == [0.0, 1.0]
    _, image, label = series[0]
    assert image.shape == (64, 96, 112)
    assert label.shape == image.shape
    assert hippo.compute_volume(label) == float(label.sum())
    assert hippo.compute_volume(label, (0.5, 1.0, 2.0)) == float(label.sum())
    assert hippo.continuity_metric(label, "sagittal") >= 0.9

    path = tmp_path / "label.nii.gz"
    hippo.save_mask(path, label, (1.0, 1.0, 1.25))
    back, spacing = hippo.load_volume(path)
    assert spacing == (1.0, 1.0, 1.25)
    assert np.array_equal(back.astype(np.uint8), label)
    # voxel (i, j, k) indexing is preserved
    i, j, k = np.argwhere(label)[0]
    assert back[i, j, k] == 1.0
    with pytest.raises(ValueError):
        hippo.load_volume(tmp_path / "missing.nii.gz")


def test_parameter_counts():
    assert hippo.parameter_count("unet", 3, 4) == 7629
    assert hippo.parameter_count("nested_unet", 3, 4, True) == 8366
    with pytest.raises(ValueError):
        hippo.parameter_count("resnet", 3, 4)


def test_config(tmp_path):
    cfg = hippo.default_config()
    assert cfg["model"]["variant"] == "nested_unet"
    resolved = hippo.resolve_config(overrides=["train.max_epochs=3", "train.patience=2"])
    assert resolved["train"]["max_epochs"] == 3
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 4}))
    assert hippo.resolve_config(str(path))["seed"] == 4
    with pytest.raises(ValueError):
        hippo.resolve_config(overrides=["no.such=1"])


def test_pipeline_stages(tmp_path):
    overrides = [
        "phantom.n_subjects=3",
        "phantom.n_timepoints=2",
        f'paths.data_dir="{tmp_path / "data"}"',
        f'paths.analysis_dir="{tmp_path / "analysis"}"',
    ]
    hippo.run("phantom", None, overrides)
    hippo.run("analyze", None, overrides + ["paths.predictions_dir=" + json.dumps(str(tmp_path / "data"))])
    rows = (tmp_path / "analysis" / "timelines.csv").read_text().strip().splitlines()
    assert len(rows) == 4
    with pytest.raises(ValueError):
        hippo.run("bogus")
