import numpy as np
import pytest

from wikivandal import _core_py, kernels
from wikivandal.features import SparseDataset

try:
    from wikivandal import _core
except ImportError:  # pragma: no cover
    _core = None

needs_ext = pytest.mark.skipif(_core is None, reason="compiled extension not built")


def _random_csr(rng, n=40, d=15, density=0.3):
    X = rng.normal(size=(n, d)) * (rng.random((n, d)) < density)
    X[3] = 0.0  # an empty row
    return SparseDataset.from_dense(X, np.ones(n)), X


def test_matvec_matches_dense(backend, rng):
    ds, X = _random_csr(rng)
    x = rng.normal(size=X.shape[1])
    out = np.empty(X.shape[0])
    backend.csr_matvec(ds.indptr, ds.indices, ds.data, x, out)
    np.testing.assert_allclose(out, X @ x, rtol=1e-13, atol=1e-13)


def test_rmatvec_matches_dense(backend, rng):
    ds, X = _random_csr(rng)
    v = rng.normal(size=X.shape[0])
    out = np.full(X.shape[1], 99.0)
    backend.csr_rmatvec(ds.indptr, ds.indices, ds.data, v, out)
    np.testing.assert_allclose(out, X.T @ v, rtol=1e-13, atol=1e-13)


def test_pav_pools_violators(backend):
    means, counts = backend.pav(np.array([0.0, 1.0, 0.0, 1.0]), np.ones(4))
    np.testing.assert_allclose(means, [0.0, 0.5, 1.0])
    assert list(counts) == [1, 2, 1]


def test_pav_weights(backend):
    means, counts = backend.pav(np.array([1.0, 0.0]), np.array([3.0, 1.0]))
    np.testing.assert_allclose(means, [0.75])
    assert list(counts) == [2]


@needs_ext
def test_backends_bit_identical(rng):
    ds, X = _random_csr(rng, n=300, d=80)
    x = rng.normal(size=80)
    v = rng.normal(size=300)
    a, b = np.empty(300), np.empty(300)
    _core.csr_matvec(ds.indptr, ds.indices, ds.data, x, a)
    _core_py.csr_matvec(ds.indptr, ds.indices, ds.data, x, b)
    assert np.array_equal(a, b)
    a, b = np.empty(80), np.empty(80)
    _core.csr_rmatvec(ds.indptr, ds.indices, ds.data, v, a)
    _core_py.csr_rmatvec(ds.indptr, ds.indices, ds.data, v, b)
    assert np.array_equal(a, b)
    y = rng.random(200).round(1)
    w = rng.integers(1, 4, size=200).astype(float)
    ma, ca = _core.pav(y, w)
    mb, cb = _core_py.pav(y, w)
    np.testing.assert_allclose(ma, mb, rtol=1e-14)
    assert np.array_equal(ca, cb)


def test_backend_flag_is_reported():
    assert kernels.BACKEND in ("cython", "python")
