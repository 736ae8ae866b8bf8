"""Pure numpy/Python versions of the compiled kernels in ``_core.pyx``.

Signatures and results match the compiled module; used when the extension
is not built or when ``WIKIVANDAL_PURE_PYTHON`` is set.
"""

import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x, out):
    rows = _row_ids(indptr)
    out[:] = np.bincount(rows, weights=data * np.asarray(x)[indices], minlength=len(out))


def csr_rmatvec(indptr, indices, data, v, out):
    rows = _row_ids(indptr)
    out[:] = np.bincount(indices, weights=data * np.asarray(v)[rows], minlength=len(out))


def pav(y, w):
    means: list[float] = []
    weights: list[float] = []
    counts: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        weights.append(float(wi))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m, wt, c = means.pop(), weights.pop(), counts.pop()
            wsum = weights[-1] + wt
            means[-1] = (weights[-1] * means[-1] + wt * m) / wsum
            weights[-1] = wsum
            counts[-1] += c
    return np.array(means, dtype=np.float64), np.array(counts, dtype=np.int64)
