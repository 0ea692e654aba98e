from __future__ import annotations

import numpy as np
import pytest

from finnet import kernels

from .helpers import random_boxes


def test_numpy_matrix_matches_scalar_reference():
    rng = np.random.default_rng(29)
    a, b = random_boxes(rng, 20), random_boxes(rng, 15)
    got = kernels.iou_matrix_numpy(a, b)
    for i in range(20):
        for j in range(15):
            ix = min(a[i, 0] + a[i, 2], b[j, 0] + b[j, 2]) - max(a[i, 0], b[j, 0])
            iy = min(a[i, 1] + a[i, 3], b[j, 1] + b[j, 3]) - max(a[i, 1], b[j, 1])
            inter = max(ix, 0) * max(iy, 0)
            union = a[i, 2] * a[i, 3] + b[j, 2] * b[j, 3] - inter
            assert got[i, j] == pytest.approx(inter / union if union else 0.0)


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable or disabled")
def test_jit_and_numpy_paths_agree():
    rng = np.random.default_rng(31)
    for _ in range(10):
        a, b = random_boxes(rng, 30), random_boxes(rng, 25)
        np.testing.assert_allclose(
            kernels.iou_matrix_jit(a, b), kernels.iou_matrix_numpy(a, b),
            rtol=0, atol=1e-12,
        )
        iou = kernels.iou_matrix_numpy(a, b)
        order = np.argsort(-rng.uniform(size=30)).astype(np.int64)
        got_jit = kernels.greedy_match_jit(iou, order, 0.3)
        got_py = kernels.greedy_match_numpy(iou, order, 0.3)
        np.testing.assert_array_equal(got_jit, got_py)


def test_env_flag_selects_numpy_path(monkeypatch):
    import importlib

    monkeypatch.setenv("FN_NO_NUMBA", "1")
    import finnet.kernels as mod

    reloaded = importlib.reload(mod)
    try:
        assert not reloaded.HAVE_NUMBA
        assert reloaded.iou_matrix is reloaded.iou_matrix_numpy
    finally:
        monkeypatch.delenv("FN_NO_NUMBA")
        importlib.reload(mod)


def test_greedy_match_respects_claims_and_threshold():
    iou = np.array([
        [0.9, 0.8],
        [0.85, 0.2],
    ])
    order = np.array([0, 1], dtype=np.int64)
    out = kernels.greedy_match_numpy(iou, order, 0.5)
    # pred 0 takes truth 0; pred 1's best remaining (truth 1) is below threshold
    assert out.tolist() == [0, -1]
