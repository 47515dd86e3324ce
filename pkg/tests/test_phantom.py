from dataclasses import replace

import numpy as np
import pytest

from angioseg.phantom import (PRESETS, Branch, PhantomSpec, Stenosis, phantom_corpus, preset_specs,
                              render_phantom, truth_to_json)
from angioseg.seg_metrics import segmentation_metrics
from angioseg.stenosis import diameter_map, scct_grade


@pytest.mark.parametrize("r0", [3.5, 4.5, 6.5])
def test_straight_bar_geometry(r0):
    spec = PhantomSpec((Branch(((20.0, 10.0), (20.0, 50.0)), r0),), (40, 60), noise_sigma=0.0)
    image, truth = render_phantom(spec)
    width = 2 * int(r0) + 1
    assert np.all(truth.mask[:, 20:40].sum(axis=0) == width)
    skel = np.zeros_like(truth.mask)
    skel[20, 15:45] = True
    d = diameter_map(truth.mask, skel)[20, 15:45]
    assert np.all(np.abs(d - 2 * r0) <= 1.0)
    assert image.min() >= 0.0 and image.max() <= 1.0


def test_integer_radius_diameter_offset():
    # |dr| <= r covers 2r + 1 rows, so the nearest background row is r + 1 away
    spec = PhantomSpec((Branch(((20.0, 10.0), (20.0, 50.0)), 4.0),), (40, 60))
    _, truth = render_phantom(spec)
    skel = np.zeros_like(truth.mask)
    skel[20, 15:45] = True
    assert np.all(diameter_map(truth.mask, skel)[20, 15:45] == 10.0)


def test_programmed_minimum_radius():
    st = Stenosis(0.5, 0.5, 6.0)
    spec = PhantomSpec((Branch(((30.0, 5.0), (30.0, 60.0)), 6.0, stenoses=(st,)),), (64, 64))
    _, truth = render_phantom(spec)
    (gt,) = truth.stenoses
    assert gt.radius_min == 3.0 and gt.severity == 0.5
    assert gt.row == 30 and abs(gt.col - 32.5) <= 1
    assert truth.radius_profiles[0][:, 1].min() == 3.0


def test_determinism_and_noise_seed():
    spec = preset_specs("mixed", seed=3, n=3)[2]
    assert spec.noise_sigma > 0
    a, _ = render_phantom(spec)
    b, _ = render_phantom(spec)
    assert a.tobytes() == b.tobytes()
    c, _ = render_phantom(replace(spec, seed=spec.seed + 1))
    assert a.tobytes() != c.tobytes()


@pytest.mark.parametrize("preset", PRESETS)
def test_centerlines_inside_mask(preset):
    for _, truth in phantom_corpus(preset, seed=1, n=8):
        for cl in truth.centerlines:
            assert truth.mask[cl[:, 0], cl[:, 1]].all()
        for st in truth.stenoses:
            assert truth.mask[st.row, st.col]


def test_preset_contents():
    specs = preset_specs("stenoses", seed=0)
    grades = [scct_grade(b.stenoses[0].severity) for s in specs for b in s.branches]
    assert all(grades.count(g) >= 4 for g in ("minimal", "mild", "moderate", "severe"))
    widths = {2 * s.branches[0].radius for s in preset_specs("tubes", seed=0)}
    assert widths == {2.0, 3.0, 5.0, 7.0, 9.0}
    assert all(len(s.branches) == 3 for s in preset_specs("bifurcations", seed=0, n=4))
    with pytest.raises(ValueError):
        preset_specs("spirals")


def test_truth_severities_are_exact():
    for spec in preset_specs("stenoses", seed=2, n=8):
        _, truth = render_phantom(spec)
        js = truth_to_json(spec, truth)
        assert [s["severity"] for s in js["stenoses"]] == [b.stenoses[0].severity for b in spec.branches]


def test_noise_lowers_threshold_dice():
    spec = preset_specs("mixed", seed=0, n=1)[0]
    dice = []
    for sigma in (0.0, 0.05, 0.1, 0.2):
        image, truth = render_phantom(replace(spec, noise_sigma=sigma))
        thr = 0.5 * (spec.vessel_intensity + spec.background_intensity)
        dice.append(segmentation_metrics(image < thr, truth.mask)["dice"])
    assert all(a > b for a, b in zip(dice, dice[1:]))


def test_spec_validation():
    with pytest.raises(ValueError):
        Branch(((0.0, 0.0), (1.0, 1.0)), 0.5)
    with pytest.raises(ValueError):
        Stenosis(1.0, 0.5)
    with pytest.raises(ValueError):
        Stenosis(0.5, 1.0)
    with pytest.raises(ValueError):
        Branch(((0.0, 0.0), (1.0, 1.0)), 2.0, kind="quadratic")
    with pytest.raises(ValueError):
        render_phantom(PhantomSpec((Branch(((5.0, 5.0), (5.0, 90.0)), 2.0),), (32, 32)))
