# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled box kernels, the Cython twin of ``_kernels_py``.

Every IoU is computed as ``inter / (area_a + area_b - inter)`` in float64
with the same operation order as the NumPy fallback, so both backends
return bit-identical results.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pairwise_iou(boxes_a, boxes_b):
    """IoU matrix between (N, 4) and (M, 4) arrays of (x1, y1, x2, y2) boxes."""
    a_arr = np.ascontiguousarray(np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4))
    b_arr = np.ascontiguousarray(np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4))
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] b = b_arr
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double ax1, ay1, ax2, ay2, area_a, area_b
    cdef double ix1, iy1, ix2, iy2, iw, ih, inter, union
    for i in range(n):
        ax1 = a[i, 0]
        ay1 = a[i, 1]
        ax2 = a[i, 2]
        ay2 = a[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(m):
            ix1 = ax1 if ax1 > b[j, 0] else b[j, 0]
            iy1 = ay1 if ay1 > b[j, 1] else b[j, 1]
            ix2 = ax2 if ax2 < b[j, 2] else b[j, 2]
            iy2 = ay2 if ay2 < b[j, 3] else b[j, 3]
            iw = ix2 - ix1
            if iw <= 0.0:
                continue
            ih = iy2 - iy1
            if ih <= 0.0:
                continue
            inter = iw * ih
            if inter > 0.0:
                area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
                union = area_a + area_b - inter
                out[i, j] = inter / union
    return out_arr


def nms_order(boxes, scores):
    """Processing order: descending score, ties by ascending (x1, y1, x2, y2)."""
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    return np.lexsort((b[:, 3], b[:, 2], b[:, 1], b[:, 0], -s))


def nms_keep(boxes, scores, double iou_threshold):
    """Greedy NMS. Returns kept indices in processing order.

    A candidate is suppressed when its IoU with an already-kept box strictly
    exceeds ``iou_threshold``.
    """
    b_arr = np.ascontiguousarray(np.asarray(boxes, dtype=np.float64).reshape(-1, 4))
    s_arr = np.asarray(scores, dtype=np.float64).reshape(-1)
    order_arr = np.ascontiguousarray(nms_order(b_arr, s_arr), dtype=np.intp)
    cdef double[:, ::1] b = b_arr
    cdef cnp.intp_t[::1] order = order_arr
    cdef Py_ssize_t n = b.shape[0]
    suppressed_arr = np.zeros(n, dtype=np.uint8)
    keep_arr = np.empty(n, dtype=np.intp)
    cdef unsigned char[::1] suppressed = suppressed_arr
    cdef cnp.intp_t[::1] keep = keep_arr
    cdef Py_ssize_t n_keep = 0, oi, oj, i, j
    cdef double ax1, ay1, ax2, ay2, area_i, area_j
    cdef double ix1, iy1, ix2, iy2, iw, ih, inter, union, overlap
    for oi in range(n):
        i = order[oi]
        if suppressed[i]:
            continue
        keep[n_keep] = i
        n_keep += 1
        ax1 = b[i, 0]
        ay1 = b[i, 1]
        ax2 = b[i, 2]
        ay2 = b[i, 3]
        area_i = (ax2 - ax1) * (ay2 - ay1)
        for oj in range(oi + 1, n):
            j = order[oj]
            if suppressed[j]:
                continue
            ix1 = ax1 if ax1 > b[j, 0] else b[j, 0]
            iy1 = ay1 if ay1 > b[j, 1] else b[j, 1]
            ix2 = ax2 if ax2 < b[j, 2] else b[j, 2]
            iy2 = ay2 if ay2 < b[j, 3] else b[j, 3]
            iw = ix2 - ix1
            if iw <= 0.0:
                continue
            ih = iy2 - iy1
            if ih <= 0.0:
                continue
            inter = iw * ih
            if inter <= 0.0:
                continue
            area_j = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
            union = area_i + area_j - inter
            overlap = inter / union
            if overlap > iou_threshold:
                suppressed[j] = 1
    return keep_arr[:n_keep].copy()
