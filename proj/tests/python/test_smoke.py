"""Smoke tests for the python bindings: every exposed operation runs and
matches an independently computed reference."""

import math

import numpy as np
import pytest

from translearn import _core


def test_filename_parsing():
    assert _core.parse_market_filename("0001_c1s1_000151_01.jpg") == (1, 1)
    assert _core.parse_market_filename("-1_c3s2_000000_00.jpg") == (-1, 3)
    assert _core.parse_duke_filename("0005_c2_f0046985.jpg") == (5, 2)
    with pytest.raises(Exception):
        _core.parse_market_filename("portrait.jpg")


def test_synthetic_roundtrip(tmp_path):
    out = str(tmp_path / "toy")
    info = _core.generate_synthetic(
        out,
        num_identities=3,
        images_per_identity=2,
        query_per_identity=1,
        gallery_per_identity=2,
        distractors_per_domain=1,
        image_h=32,
        image_w=16,
        num_cameras=2,
        seed=11,
    )
    assert info["count"] > 0

    src = _core.load_dataset(out + "/source", "synthetic", "source")
    assert src["train"] == 6
    assert src["num_classes"] == 3
    tgt = _core.load_dataset(out + "/target", "synthetic", "target")
    assert tgt["query"] == 3
    assert tgt["gallery"] == 3 * 2 + 1


def test_lmp_matches_numpy():
    rng = np.random.default_rng(3)
    fmap = rng.normal(size=(2, 5, 8, 4))

    avg = _core.lmp(fmap, parts=1, mode="avg")
    assert avg.shape == (2, 5)
    np.testing.assert_allclose(avg, fmap.mean(axis=(2, 3)), atol=1e-12)

    mx = _core.lmp(fmap, parts=4, mode="max")
    assert mx.shape == (2, 20)
    bands = fmap.reshape(2, 5, 4, 2, 4).max(axis=(3, 4))  # [B, C, P]
    np.testing.assert_allclose(
        mx, bands.transpose(0, 2, 1).reshape(2, 20), atol=1e-12
    )


def test_losses_match_references():
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    assert _core.contrastive_loss(1, e1, e2, 2.0) == pytest.approx(2.0)
    gap = 2.0 - math.sqrt(2.0)
    assert _core.contrastive_loss(0, e1, e2, 2.0) == pytest.approx(gap * gap)

    logits = np.zeros((3, 8))
    assert _core.classification_loss(logits, [0, 4, 7]) == pytest.approx(
        math.log(8.0)
    )


def test_evaluate_hand_case():
    # Two positives ranked 1st and 3rd: AP = (1/1 + 2/3) / 2 = 5/6.
    q = np.array([[0.0, 0.0]])
    g = np.array([[0.1, 0.0], [0.2, 0.0], [0.3, 0.0]])
    rep = _core.evaluate(
        [1], [1], q, [1, 2, 1], [2, 1, 3], g, protocol="sq"
    )
    assert rep["mAP"] == pytest.approx(5.0 / 6.0)
    assert rep["rank1"] == pytest.approx(1.0)
    assert rep["evaluated"] == 1
    assert rep["skipped"] == 0
