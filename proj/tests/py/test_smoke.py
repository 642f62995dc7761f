"""Smoke tests for the Python bindings.

Run under ctest with PYTHONPATH pointing at the staged build-tree package;
uses only asserts so it also works without pytest.
"""

import math
import os
import sys
import tempfile

import numpy as np

import translearn as tl


def test_filename_parsing():
    assert tl.parse_market_filename("0001_c1s1_000151_01.png") == (1, 1)
    assert tl.parse_market_filename("-1_c3s2_000000_00.jpg") == (-1, 3)
    assert tl.parse_market_filename("0000_c6s4_000001_05.jpg") == (0, 6)
    assert tl.parse_duke_filename("0005_c2_f0046985.jpg") == (5, 2)
    try:
        tl.parse_market_filename("not_a_valid_name.png")
    except Exception:
        pass
    else:
        raise AssertionError("malformed filename should raise")


def test_lmp_identities():
    rng = np.random.default_rng(7)
    fmap = rng.normal(size=(2, 4, 6, 5))
    # One average band equals global average pooling.
    gap = fmap.mean(axis=(2, 3))
    got = tl.lmp(fmap, parts=1, mode="avg")
    assert got.shape == (2, 4)
    assert np.allclose(got, gap, atol=1e-12)
    # Max over one band equals the global max.
    gmp = fmap.max(axis=(2, 3))
    assert np.allclose(tl.lmp(fmap, 1, "max"), gmp, atol=1e-12)
    # P bands concatenate to P*C dims.
    assert tl.lmp(fmap, 3, "max").shape == (2, 12)


def test_contrastive_loss_values():
    e = np.zeros(4)
    e[0] = 1.0
    f = np.zeros(4)
    f[1] = 1.0
    d = math.sqrt(2.0)
    # Similar pair: d^2.
    assert abs(tl.contrastive_loss(1, e, f, 2.0) - d * d) < 1e-12
    # Dissimilar pair: max(0, m - d)^2.
    expect = (2.0 - d) ** 2
    assert abs(tl.contrastive_loss(0, e, f, 2.0) - expect) < 1e-12
    # Identical embeddings, similar pair: zero loss.
    assert tl.contrastive_loss(1, e, e, 2.0) == 0.0


def test_classification_loss():
    logits = np.zeros((2, 3))
    want = math.log(3.0)  # uniform logits
    got = tl.classification_loss(logits, [0, 2])
    assert abs(got - want) < 1e-12


def test_evaluate_hand_case():
    # One query, five gallery entries; descriptors on a line so distances
    # are the absolute coordinate differences.
    q = np.array([[0.0]])
    g = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
    q_pids, q_cams = [7], [1]
    g_pids = [7, 9, 7, 9, 7]
    g_cams = [2, 1, 2, 2, 3]
    rep = tl.evaluate(q_pids, q_cams, q, g_pids, g_cams, g, "sq")
    # Positives at ranks 1, 3, 5 -> AP = (1/1 + 2/3 + 3/5) / 3.
    want_ap = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0
    assert abs(rep["mAP"] - want_ap) < 1e-12
    assert rep["rank1"] == 1.0
    assert rep["skipped"] == 0
    assert rep["evaluated"] == 1


def test_synthetic_roundtrip():
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "toy")
        info = tl.generate_synthetic(
            out,
            num_identities=3,
            images_per_identity=2,
            query_per_identity=1,
            gallery_per_identity=2,
            image_h=32,
            image_w=16,
            seed=11,
        )
        # 2 domains x (3*2 train) + target query/gallery + source query/gallery
        assert info["count"] > 0
        assert os.path.exists(info["manifest_path"])
        src = tl.load_dataset(os.path.join(out, "source"), "synthetic", "source")
        tgt = tl.load_dataset(os.path.join(out, "target"), "synthetic", "target")
        assert src["train"] == 6
        assert src["num_classes"] == 3
        assert tgt["query"] == 3
        assert tgt["gallery"] >= 6


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for fn in tests:
        fn()
        print(f"ok {fn.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    main()
