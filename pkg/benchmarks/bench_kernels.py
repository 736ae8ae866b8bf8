"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--rows 20000] [--repeat 5]

Times sparse matvec, transposed matvec, PAV, and a full training run under
each backend, and checks that both give the same answers.
"""

import argparse
import importlib
import time
import warnings

import numpy as np

from wikivandal import _core_py, kernels
from wikivandal.features import SparseDataset
from wikivandal.model import TrainConfig, train


def random_csr(rng, rows, cols, per_row):
    nnz = rng.integers(1, 2 * per_row, size=rows)
    indptr = np.r_[0, np.cumsum(nnz)].astype(np.int64)
    indices = np.concatenate([np.sort(rng.choice(cols, size=k, replace=False)) for k in nnz]).astype(np.int32)
    data = rng.random(indptr[-1])
    labels = np.where(rng.random(rows) < 0.45, 1.0, -1.0)
    # plant some signal so training takes a realistic number of iterations
    data[np.isin(indices, np.arange(20))] *= 3.0
    return SparseDataset(indptr, indices, data, labels, cols)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def use(mod):
    for name in ("csr_matvec", "csr_rmatvec", "pav"):
        setattr(kernels, name, getattr(mod, name))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--cols", type=int, default=50000)
    ap.add_argument("--per-row", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = {"python": _core_py}
    try:
        backends = {"cython": importlib.import_module("wikivandal._core"), **backends}
    except ImportError:
        print("compiled extension not built; benchmarking the fallback only")

    rng = np.random.default_rng(0)
    ds = random_csr(rng, args.rows, args.cols, args.per_row)
    x = rng.normal(size=args.cols)
    u = rng.normal(size=args.rows)
    pav_y = np.sort(rng.random(200000)) + rng.normal(scale=0.3, size=200000)
    pav_w = np.ones_like(pav_y)
    print(f"data: {args.rows} rows x {args.cols} cols, nnz {ds.nnz}; PAV n={len(pav_y)}")

    results = {}
    for name, mod in backends.items():
        use(mod)
        out = np.empty(args.rows)
        back = np.empty(args.cols)
        t_mv, _ = best_of(lambda: mod.csr_matvec(ds.indptr, ds.indices, ds.data, x, out), args.repeat)
        t_rmv, _ = best_of(lambda: mod.csr_rmatvec(ds.indptr, ds.indices, ds.data, u, back), args.repeat)
        t_pav, pav_out = best_of(lambda: mod.pav(pav_y, pav_w), max(1, args.repeat // 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            t_train, model = best_of(lambda: train(ds, TrainConfig(C=1.0)), 1)
        results[name] = dict(matvec=t_mv, rmatvec=t_rmv, pav=t_pav, train=t_train)
        results[name]["_out"] = (out.copy(), back.copy(), pav_out, model.augmented)

    names = list(results)
    print(f"{'kernel':<10}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for k in ("matvec", "rmatvec", "pav", "train"):
        row = f"{k:<10}" + "".join(f"{results[n][k] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            row += f"{results[names[1]][k] / results[names[0]][k]:>11.1f}x"
        print(row)

    if len(names) == 2:
        a, b = (results[n]["_out"] for n in names)
        print("max |difference|: matvec %.1e, rmatvec %.1e, pav %.1e, weights %.1e" % (
            np.abs(a[0] - b[0]).max(), np.abs(a[1] - b[1]).max(),
            np.abs(a[2][0] - b[2][0]).max(), np.abs(a[3] - b[3]).max()))


if __name__ == "__main__":
    main()
