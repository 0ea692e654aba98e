"""Numeric inner loops for box evaluation.

The jitted path (numba ``@njit``) is the default; set ``FN_NO_NUMBA=1`` to
select the pure-numpy/python path, which is also chosen automatically when
numba is not importable. ``benchmarks/bench_kernels.py`` compares the two.

Both paths are exported under stable names (``iou_matrix_numpy`` and, when
available, ``iou_matrix_jit``) so tests can assert they agree.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("FN_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


def iou_matrix_numpy(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU for (x, y, w, h) rows; shape (len(a), len(b))."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    union = (a[:, 2:3] * a[:, 3:4]) + (b[:, 2] * b[:, 3]) - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0.0, inter / union, 0.0)
    return iou


def _iou_matrix_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        ax1 = a[i, 0]
        ay1 = a[i, 1]
        ax2 = ax1 + a[i, 2]
        ay2 = ay1 + a[i, 3]
        area_a = a[i, 2] * a[i, 3]
        for j in range(m):
            bx1 = b[j, 0]
            by1 = b[j, 1]
            bx2 = bx1 + b[j, 2]
            by2 = by1 + b[j, 3]
            iw = min(ax2, bx2) - max(ax1, bx1)
            if iw <= 0.0:
                continue
            ih = min(ay2, by2) - max(ay1, by1)
            if ih <= 0.0:
                continue
            inter = iw * ih
            union = area_a + b[j, 2] * b[j, 3] - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


def _greedy_match_loops(iou: np.ndarray, order: np.ndarray,
                        threshold: float) -> np.ndarray:
    """Each prediction (visited in ``order``) claims the unclaimed truth with
    the highest IoU >= threshold; IoU ties go to the earlier truth."""
    n, m = iou.shape
    pred_to_truth = np.full(n, -1, dtype=np.int64)
    claimed = np.zeros(m, dtype=np.bool_)
    for k in range(n):
        i = order[k]
        best_j = -1
        best_v = 0.0
        for j in range(m):
            if claimed[j]:
                continue
            v = iou[i, j]
            if v >= threshold and v > best_v:
                best_v = v
                best_j = j
        if best_j >= 0:
            pred_to_truth[i] = best_j
            claimed[best_j] = True
    return pred_to_truth


def greedy_match_numpy(iou: np.ndarray, order: np.ndarray,
                       threshold: float) -> np.ndarray:
    return _greedy_match_loops(
        np.asarray(iou, dtype=np.float64),
        np.asarray(order, dtype=np.int64),
        float(threshold),
    )


HAVE_NUMBA = False
if not _numba_disabled():
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:
        pass

if HAVE_NUMBA:
    _iou_matrix_compiled = njit(cache=True)(_iou_matrix_loops)
    _greedy_match_compiled = njit(cache=True)(_greedy_match_loops)

    def iou_matrix_jit(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
        a = np.ascontiguousarray(np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4))
        b = np.ascontiguousarray(np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4))
        return _iou_matrix_compiled(a, b)

    def greedy_match_jit(iou: np.ndarray, order: np.ndarray,
                         threshold: float) -> np.ndarray:
        return _greedy_match_compiled(
            np.ascontiguousarray(iou, dtype=np.float64),
            np.ascontiguousarray(order, dtype=np.int64),
            float(threshold),
        )

    iou_matrix = iou_matrix_jit
    greedy_match = greedy_match_jit
else:
    iou_matrix = iou_matrix_numpy
    greedy_match = greedy_match_numpy
