"""L2-regularized logistic regression and isotonic calibration.

The bias is an appended constant feature (value ``bias_value``) whose weight
is regularized together with the others, so the objective is::

    f(w) = 0.5 * |w|^2 + C * sum_i log(1 + exp(-y_i * w.x_i))

over the augmented vectors. Training uses a trust-region Newton method with
conjugate-gradient inner solves.
"""

from __future__ import annotations

import bisect
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from . import kernels
from .features import SparseDataset, SparseVector

log = logging.getLogger(__name__)

MIN_CALIBRATION_CASES = 1000


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, weights: np.ndarray, grad_norm: float):
        super().__init__(f"{message} (gradient norm {grad_norm:.3e})")
        self.weights = weights
        self.grad_norm = grad_norm


@dataclass
class TrainConfig:
    C: float = 1.0
    bias: float = 1.0
    tolerance: float = 1e-4
    max_iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class LinearModel:
    weights: np.ndarray
    bias_weight: float = 0.0
    bias_value: float = 1.0
    C: float = 1.0
    scaling: str = ""
    iterations: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or len(self.weights) < 1:
            raise ValueError("weights must be a nonempty vector")
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias_weight)):
            raise ValueError("weights must be finite")

    @property
    def n_features(self) -> int:
        return len(self.weights)

    @property
    def augmented(self) -> np.ndarray:
        return np.append(self.weights, self.bias_weight)

    @classmethod
    def from_augmented(cls, w: np.ndarray, bias_value: float, **kw) -> "LinearModel":
        return cls(w[:-1].copy(), float(w[-1]), bias_value, **kw)

    def decision_function(self, data: SparseDataset) -> np.ndarray:
        return _margins(self.augmented, data, self.bias_value)

    def predict_proba(self, data: SparseDataset) -> np.ndarray:
        return _sigmoid(self.decision_function(data))


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log1pexp(z):
    """log(1 + exp(z)) without overflow."""
    z = np.asarray(z, dtype=np.float64)
    return np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(np.minimum(z, 0))))


def _check_dims(w: np.ndarray, data: SparseDataset) -> None:
    if len(w) != data.n_features + 1:
        raise ValueError(
            f"dimension mismatch: model has {len(w) - 1} features, data has {data.n_features}")


def _margins(w: np.ndarray, data: SparseDataset, bias_value: float) -> np.ndarray:
    """X_aug @ w for augmented ``w`` (length n_features + 1)."""
    n_feat = len(w) - 1
    out = np.empty(len(data))
    if data.n_features > n_feat:
        # ids beyond the model's range are dropped
        rows = np.repeat(np.arange(len(data)), np.diff(data.indptr))
        keep = data.indices < n_feat
        out[:] = np.bincount(rows[keep], weights=data.data[keep] * w[data.indices[keep]],
                             minlength=len(data))
    else:
        kernels.csr_matvec(data.indptr, data.indices, data.data, np.ascontiguousarray(w[:-1]), out)
    return out + w[-1] * bias_value


class LogisticProblem:
    """Objective, gradient and Hessian-vector products on augmented weights."""

    def __init__(self, data: SparseDataset, C: float, bias_value: float = 1.0):
        self.data = data
        self.C = float(C)
        self.bias_value = float(bias_value)
        self.y = data.labels
        self._z = np.empty(len(data))
        self._tmp = np.empty(data.n_features)
        self._d: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.data.n_features + 1

    def _xv(self, v: np.ndarray) -> np.ndarray:
        d = self.data
        kernels.csr_matvec(d.indptr, d.indices, d.data, np.ascontiguousarray(v[:-1]), self._z)
        return self._z + v[-1] * self.bias_value

    def _xtv(self, u: np.ndarray) -> np.ndarray:
        d = self.data
        kernels.csr_rmatvec(d.indptr, d.indices, d.data, np.ascontiguousarray(u), self._tmp)
        return np.append(self._tmp, self.bias_value * u.sum())

    def objective(self, w: np.ndarray) -> float:
        _check_dims(w, self.data)
        yz = self.y * self._xv(w)
        return float(0.5 * w.dot(w) + self.C * _log1pexp(-yz).sum())

    def gradient(self, w: np.ndarray) -> np.ndarray:
        """Gradient at ``w``; also caches the Hessian weights for ``hess_vec``."""
        _check_dims(w, self.data)
        s = _sigmoid(self.y * self._xv(w))
        self._d = s * (1.0 - s)
        return w + self.C * self._xtv((s - 1.0) * self.y)

    def hess_vec(self, v: np.ndarray) -> np.ndarray:
        if self._d is None:
            raise RuntimeError("call gradient() before hess_vec()")
        return v + self.C * self._xtv(self._d * self._xv(v))


def objective(model: LinearModel, data: SparseDataset, C: float) -> float:
    return LogisticProblem(data, C, model.bias_value).objective(model.augmented)


def gradient(model: LinearModel, data: SparseDataset, C: float) -> np.ndarray:
    """Gradient over the augmented weights; the last entry is the bias weight's."""
    return LogisticProblem(data, C, model.bias_value).gradient(model.augmented)


def _trcg(prob: LogisticProblem, g: np.ndarray, delta: float, max_cg: int):
    """Conjugate gradient on the Newton system, truncated at the trust region."""
    s = np.zeros_like(g)
    r = -g
    d = r.copy()
    rtr = r.dot(r)
    cgtol = 0.1 * math.sqrt(rtr)
    for _ in range(max_cg):
        if math.sqrt(rtr) <= cgtol:
            break
        hd = prob.hess_vec(d)
        alpha = rtr / d.dot(hd)
        s += alpha * d
        if np.linalg.norm(s) > delta:
            s -= alpha * d
            std, sts, dtd = s.dot(d), s.dot(s), d.dot(d)
            dsq = delta * delta
            rad = math.sqrt(max(std * std + dtd * (dsq - sts), 0.0))
            alpha = (dsq - sts) / (std + rad) if std >= 0 else (rad - std) / dtd
            s += alpha * d
            r -= alpha * hd
            break
        r -= alpha * hd
        rnew = r.dot(r)
        d = r + (rnew / rtr) * d
        rtr = rnew
    return s, r


def tron(prob: LogisticProblem, w0: np.ndarray | None = None, tolerance: float = 1e-4,
         max_iterations: int = 1000) -> tuple[np.ndarray, int]:
    """Trust-region Newton minimization of ``prob``.

    Stops once |grad| <= tolerance * max(1, |grad at w=0|). Returns the
    solution and the number of outer iterations.
    """
    eta0, eta1, eta2 = 1e-4, 0.25, 0.75
    sigma1, sigma2, sigma3 = 0.25, 0.5, 4.0

    w = np.zeros(prob.dim) if w0 is None else np.array(w0, dtype=np.float64)
    gnorm0 = np.linalg.norm(prob.gradient(np.zeros(prob.dim)))
    f = prob.objective(w)
    g = prob.gradient(w)
    gnorm = np.linalg.norm(g)
    target = tolerance * max(1.0, gnorm0)
    delta = gnorm
    it = 0
    stalled = 0
    while gnorm > target:
        if it >= max_iterations:
            raise ConvergenceError(f"no convergence in {max_iterations} iterations", w, gnorm)
        it += 1
        s, r = _trcg(prob, g, delta, max_cg=max(prob.dim, 10))
        w_new = w + s
        gs = g.dot(s)
        prered = -0.5 * (gs - s.dot(r))
        f_new = prob.objective(w_new)
        actred = f - f_new
        snorm = np.linalg.norm(s)
        if it == 1:
            delta = min(delta, snorm)
        denom = f_new - f - gs
        alpha = sigma3 if denom <= 0 else max(sigma1, -0.5 * gs / denom)
        if actred < eta0 * prered:
            delta = min(max(alpha, sigma1) * snorm, sigma2 * delta)
        elif actred < eta1 * prered:
            delta = max(sigma1 * delta, min(alpha * snorm, sigma2 * delta))
        elif actred < eta2 * prered:
            delta = max(sigma1 * delta, min(alpha * snorm, sigma3 * delta))
        else:
            delta = max(delta, min(alpha * snorm, sigma3 * delta))
        in_noise = abs(actred) <= 1e-12 * abs(f) and abs(prered) <= 1e-12 * abs(f)
        if actred > eta0 * prered:
            w, f = w_new, f_new
            g = prob.gradient(w)
            gnorm = np.linalg.norm(g)
        elif in_noise:
            # f can no longer tell iterates apart; judge the step by the gradient
            g_new = prob.gradient(w_new)
            gnorm_new = np.linalg.norm(g_new)
            if gnorm_new < gnorm:
                w, f, g, gnorm = w_new, f_new, g_new, gnorm_new
                stalled = 0
            else:
                prob.gradient(w)
                stalled += 1
        else:
            # restore the Hessian weights of the current iterate
            prob.gradient(w)
        if gnorm <= target:
            break
        if in_noise and stalled >= 3:
            break
    if gnorm > target:
        raise ConvergenceError("stalled at floating-point precision", w, gnorm)
    log.debug("tron: %d iterations, f=%.6g, |g|=%.3g", it, f, gnorm)
    return w, it


def train(data: SparseDataset, config: TrainConfig | None = None, scaling: str = "") -> LinearModel:
    config = config or TrainConfig()
    if len(data) < 1:
        raise ValueError("need at least one training instance")
    prob = LogisticProblem(data, config.C, config.bias)
    w, it = tron(prob, tolerance=config.tolerance, max_iterations=config.max_iterations)
    return LinearModel.from_augmented(w, config.bias, C=config.C, scaling=scaling, iterations=it)


def predict_score(model: LinearModel, x: SparseVector) -> float:
    """Probability of the positive class for one sparse vector."""
    z = model.bias_weight * model.bias_value
    for i, v in zip(x.ids, x.values):
        if i < model.n_features:
            z += model.weights[i] * v
    return float(_sigmoid(np.array([z]))[0])


@dataclass
class IsotonicMap:
    """Stepwise-constant nondecreasing map from raw score to probability.

    Block ``j`` covers scores in ``(breakpoints[j-1], breakpoints[j]]``; the
    first block extends to -inf and the last to +inf.
    """

    breakpoints: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("values must be nondecreasing")

    def __call__(self, score: float) -> float:
        return self.values[bisect.bisect_left(self.breakpoints, score)]

    def transform(self, scores) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.breakpoints, dtype=np.float64), scores, side="left")
        return np.asarray(self.values, dtype=np.float64)[idx]


def fit_pav(scores: Sequence[float], labels: Sequence[int]) -> IsotonicMap:
    """Least-squares isotonic fit of ``labels`` on ``scores`` by pool-adjacent-violators."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if len(scores) == 0:
        raise ValueError("cannot calibrate on an empty set")
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    if len(scores) < MIN_CALIBRATION_CASES:
        warnings.warn(f"isotonic calibration on {len(scores)} < {MIN_CALIBRATION_CASES} cases",
                      stacklevel=2)
    order = np.argsort(scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # equal scores start out in one block
    uniq, start = np.unique(s, return_index=True)
    counts = np.diff(np.append(start, len(s))).astype(np.float64)
    sums = np.add.reduceat(y, start)
    means, nblocks = kernels.pav(np.ascontiguousarray(sums / counts), np.ascontiguousarray(counts))
    ends = np.cumsum(nblocks) - 1
    uppers = uniq[ends]
    breakpoints, values = [], [float(means[0])]
    for j in range(1, len(means)):
        if means[j] == values[-1]:
            continue
        breakpoints.append(float(uppers[j - 1]))
        values.append(float(means[j]))
    return IsotonicMap(breakpoints, values)


def calibrate(imap: IsotonicMap, score: float) -> float:
    return imap(score)


_MODEL_MAGIC = "wikivandal-linear-model v1"
_ISOTONIC_SEP = "--- isotonic"


def save_model(fh: IO[str], model: LinearModel, isotonic: IsotonicMap | None = None,
               provenance: str = "") -> None:
    """Write the model text format.

    Header lines ``key value``, a ``weights`` line, one weight per line, then
    optionally ``--- isotonic`` and ``breakpoint value`` pairs (the last pair
    has breakpoint ``inf``). Floats use ``repr`` (17 significant digits).
    """
    fh.write(f"# {_MODEL_MAGIC}\n")
    if provenance:
        fh.write(f"# {provenance}\n")
    fh.write(f"n_features {model.n_features}\n")
    fh.write(f"bias_value {model.bias_value!r}\n")
    fh.write(f"scaling {model.scaling or '-'}\n")
    fh.write(f"C {model.C!r}\n")
    fh.write(f"bias_weight {model.bias_weight!r}\n")
    fh.write("weights\n")
    for w in model.weights:
        fh.write(f"{float(w)!r}\n")
    if isotonic is not None:
        fh.write(f"{_ISOTONIC_SEP}\n")
        for b, v in zip(isotonic.breakpoints + [math.inf], isotonic.values):
            fh.write(f"{b!r} {v!r}\n")


def load_model(fh: IO[str]) -> tuple[LinearModel, IsotonicMap | None]:
    header: dict[str, str] = {}
    line = fh.readline()
    if line.strip() != f"# {_MODEL_MAGIC}":
        raise ValueError("not a wikivandal model file")
    for line in fh:
        line = line.strip()
        if line.startswith("#"):
            continue
        if line == "weights":
            break
        key, value = line.split(None, 1)
        header[key] = value
    n = int(header["n_features"])
    weights = np.empty(n)
    for i in range(n):
        weights[i] = float(fh.readline())
    model = LinearModel(
        weights,
        bias_weight=float(header["bias_weight"]),
        bias_value=float(header["bias_value"]),
        C=float(header["C"]),
        scaling="" if header["scaling"] == "-" else header["scaling"],
    )
    rest = fh.readline().strip()
    if rest != _ISOTONIC_SEP:
        return model, None
    pairs = [ln.split() for ln in fh if ln.strip()]
    values = [float(v) for _, v in pairs]
    breakpoints = [float(b) for b, _ in pairs[:-1]]
    return model, IsotonicMap(breakpoints, values)
