"""Test problems with analytic gradients, synthetic datasets, and a finite-difference oracle.

Analytic objectives (quadratic, rosenbrock, scale-invariant) ignore batches.
Dataset objectives (logistic blobs, tiny batch-normalized MLP) take an index
array into their SyntheticDataset; full_grad evaluates the whole dataset. All
gradients are returned as flat per-group vectors matching group_layout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .core import GradientSet, ParamGroup, seeded_rng

__all__ = [
    "Objective",
    "SyntheticDataset",
    "quadratic",
    "rosenbrock",
    "scale_invariant_objective",
    "logistic_regression",
    "tiny_mlp",
    "finite_difference_grad",
]

BN_VAR_FLOOR = 1e-5


@dataclass
class SyntheticDataset:
    """Feature matrix plus integer labels with seeded batch sampling."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.labels) != len(self.features):
            raise ValueError("features must be N x d with one label per row")

    @property
    def n(self) -> int:
        return len(self.labels)

    def epoch_batches(self, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
        """Shuffle once, then yield consecutive slices (without replacement)."""
        if batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {batch_size}")
        order = rng.permutation(self.n)
        for start in range(0, self.n, batch_size):
            yield order[start:start + batch_size]

    def sample(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """One uniform batch without replacement (for evaluation windows)."""
        return rng.choice(self.n, size=min(batch_size, self.n), replace=False)

    def export_csv(self, path) -> None:
        """Write feature columns then the label column."""
        d = self.features.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"f{j}" for j in range(d)] + ["label"])
            for x, y in zip(self.features, self.labels):
                w.writerow([repr(float(v)) for v in x] + [int(y)])

    @classmethod
    def import_csv(cls, path) -> "SyntheticDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise ValueError(f"no data rows in {path}")
        body = rows[1:]
        feats = np.array([[float(v) for v in r[:-1]] for r in body])
        labels = np.array([int(r[-1]) for r in body])
        return cls(features=feats, labels=labels)


class Objective:
    """Base interface: loss value, analytic per-group gradient, full-data gradient."""

    name: str = ""
    group_layout: Dict[str, int] = {}
    is_scale_invariant: Dict[str, bool] = {}
    dataset: Optional[SyntheticDataset] = None

    def eval(self, params: Sequence[ParamGroup], batch: Optional[np.ndarray] = None) -> float:
        raise NotImplementedError

    def grad(self, params: Sequence[ParamGroup], batch: Optional[np.ndarray] = None) -> GradientSet:
        raise NotImplementedError

    def full_grad(self, params: Sequence[ParamGroup]) -> GradientSet:
        if self.dataset is None:
            return self.grad(params)
        return self.grad(params, np.arange(self.dataset.n))

    def init_params(self, rng: np.random.Generator, scale: float = 1.0) -> List[ParamGroup]:
        return [
            ParamGroup(name, scale * rng.standard_normal(dim))
            for name, dim in self.group_layout.items()
        ]

    def accuracy(self, params: Sequence[ParamGroup]) -> Optional[float]:
        """Fraction of correctly classified examples; None for non-classifiers."""
        return None

    def _check(self, params: Sequence[ParamGroup]) -> Dict[str, np.ndarray]:
        vals = {g.name: g.values for g in params}
        for name, dim in self.group_layout.items():
            if name not in vals or vals[name].size != dim:
                raise ValueError(f"objective {self.name!r} expects group {name!r} of dim {dim}")
        return vals


class _Quadratic(Objective):
    def __init__(self, dim: int, a_diag: np.ndarray, b: np.ndarray):
        a_diag = np.asarray(a_diag, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a_diag.shape != (dim,) or b.shape != (dim,):
            raise ValueError("a_diag and b must both have length dim")
        if np.any(a_diag <= 0):
            raise ValueError("quadratic requires strictly positive diagonal entries")
        self.name = "quadratic"
        self.a_diag = a_diag
        self.b = b
        self.group_layout = {"theta": dim}
        self.is_scale_invariant = {"theta": False}
        self.smoothness = float(a_diag.max())

    def eval(self, params, batch=None) -> float:
        th = self._check(params)["theta"]
        return float(0.5 * th @ (self.a_diag * th) - self.b @ th)

    def grad(self, params, batch=None) -> GradientSet:
        th = self._check(params)["theta"]
        return {"theta": self.a_diag * th - self.b}

    def minimizer(self) -> np.ndarray:
        return self.b / self.a_diag


def quadratic(dim: int, a_diag=None, b=None, condition: float = 1.0) -> Objective:
    """f(theta) = 1/2 theta' A theta - b' theta with diagonal SPD A.

    When a_diag is omitted it is built as a geometric ramp from 1 to
    ``condition`` so the condition number is explicit.
    """
    if a_diag is None:
        a_diag = np.geomspace(1.0, float(condition), dim) if condition != 1.0 else np.ones(dim)
    if b is None:
        b = np.zeros(dim)
    return _Quadratic(dim, a_diag, b)


class _Rosenbrock(Objective):
    def __init__(self):
        self.name = "rosenbrock"
        self.group_layout = {"theta": 2}
        self.is_scale_invariant = {"theta": False}

    def eval(self, params, batch=None) -> float:
        x, y = self._check(params)["theta"]
        return float((1 - x) ** 2 + 100.0 * (y - x * x) ** 2)

    def grad(self, params, batch=None) -> GradientSet:
        x, y = self._check(params)["theta"]
        gx = -2.0 * (1 - x) - 400.0 * x * (y - x * x)
        gy = 200.0 * (y - x * x)
        return {"theta": np.array([gx, gy])}


def rosenbrock(dim: int = 2) -> Objective:
    """The classic banana valley; only the 2-d form is supported."""
    if dim != 2:
        raise ValueError(f"rosenbrock is defined here for dim=2 only, got {dim}")
    return _Rosenbrock()


class _ScaleInvariant(Objective):
    """f(theta) = g(theta / ||theta||) for a fixed smooth g on the sphere.

    g(u) = -<u, tau> + 1/2 u' Q u with tau = e_1 and Q a fixed diagonal ramp,
    so f(c theta) = f(theta) exactly for c > 0 and <theta, grad f> = 0 by
    construction (degree-0 homogeneity).
    """

    def __init__(self, dim: int):
        if dim < 2:
            raise ValueError(f"scale-invariant objective needs dim >= 2, got {dim}")
        self.name = "scale_invariant"
        self.dim = dim
        self.tau = np.zeros(dim)
        self.tau[0] = 1.0
        self.q_diag = np.linspace(1.0, 2.0, dim)
        self.group_layout = {"theta": dim}
        self.is_scale_invariant = {"theta": True}

    def _unit(self, th: np.ndarray) -> tuple:
        norm = np.linalg.norm(th)
        if norm == 0.0:
            raise ValueError("scale-invariant objective is undefined at theta = 0")
        return th / norm, norm

    def eval(self, params, batch=None) -> float:
        u, _ = self._unit(self._check(params)["theta"])
        return float(-(u @ self.tau) + 0.5 * u @ (self.q_diag * u))

    def grad(self, params, batch=None) -> GradientSet:
        th = self._check(params)["theta"]
        u, norm = self._unit(th)
        g_sphere = self.q_diag * u - self.tau
        # Chain rule through the normalization: project onto the tangent
        # space of u and divide by the radius.
        tangent = g_sphere - float(u @ g_sphere) * u
        return {"theta": tangent / norm}


def scale_invariant_objective(dim: int) -> Objective:
    return _ScaleInvariant(dim)


def _sigmoid_neg(z: np.ndarray) -> np.ndarray:
    """Numerically stable sigmoid(-z)."""
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    ez = np.exp(z[~pos])
    out[~pos] = 1.0 / (1.0 + ez)
    return out


def _two_blobs(d: int, n: int, separation: float, rng: np.random.Generator):
    """Two unit-variance Gaussian blobs at +/- (separation/2) along a random axis."""
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    half = n // 2
    signs = np.concatenate([np.ones(half), -np.ones(n - half)])
    feats = rng.standard_normal((n, d)) + np.outer(signs, (separation / 2.0) * u)
    return feats, signs.astype(np.int64), u


class _Logistic(Objective):
    def __init__(self, d: int, n: int, seed: int, separation: float):
        if d < 1:
            raise ValueError(f"need d >= 1, got {d}")
        if n < 2:
            raise ValueError(f"need at least 2 examples, got {n}")
        feats, labels, axis = _two_blobs(d, n, separation, seeded_rng(seed))
        self.name = "logistic"
        self.dataset = SyntheticDataset(features=feats, labels=labels)
        self.separating_axis = axis
        self.group_layout = {"theta": d}
        self.is_scale_invariant = {"theta": False}

    def _batch(self, batch):
        if batch is None:
            batch = np.arange(self.dataset.n)
        return self.dataset.features[batch], self.dataset.labels[batch].astype(np.float64)

    def eval(self, params, batch=None) -> float:
        th = self._check(params)["theta"]
        X, y = self._batch(batch)
        z = (X @ th) * y
        return float(np.mean(np.logaddexp(0.0, -z)))

    def grad(self, params, batch=None) -> GradientSet:
        th = self._check(params)["theta"]
        X, y = self._batch(batch)
        z = (X @ th) * y
        s = _sigmoid_neg(z)
        return {"theta": -(s * y) @ X / len(y)}

    def accuracy(self, params) -> float:
        th = self._check(params)["theta"]
        pred = np.where(self.dataset.features @ th >= 0, 1, -1)
        return float(np.mean(pred == self.dataset.labels))


def logistic_regression(d: int, n: int, seed: int, separation: float = 4.0) -> Objective:
    """Binary logistic regression on two Gaussian blobs with +/-1 labels.

    loss = mean log(1 + exp(-y theta.x)); at theta = 0 this is log 2 for any
    data. Minibatch gradients over equal-size batches average exactly to the
    full gradient.
    """
    return _Logistic(d, n, seed, separation)


def _class_centers(d: int, classes: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    if classes == 2:
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        return np.vstack([(separation / 2.0) * u, -(separation / 2.0) * u])
    # Orthonormalize random directions so centers do not collide.
    raw = rng.standard_normal((d, classes))
    q, _ = np.linalg.qr(raw)
    return (separation / 2.0) * q[:, :classes].T


class _TinyMLP(Objective):
    """x -> W1 x -> per-unit batch normalization -> ReLU -> W2 -> softmax CE.

    Normalization uses the population statistics of the current batch with a
    variance floor; no learned affine follows it, which is what makes each
    row of W1 scale-invariant (while the floor stays inactive).
    """

    def __init__(self, d_in: int, hidden: int, classes: int, n: int, seed: int,
                 separation: float):
        if min(d_in, hidden, classes) < 2:
            raise ValueError("d_in, hidden and classes must all be >= 2")
        if n < 2:
            raise ValueError(f"need at least 2 examples, got {n}")
        rng = seeded_rng(seed)
        centers = _class_centers(d_in, classes, separation, rng)
        labels = np.arange(n) % classes
        feats = rng.standard_normal((n, d_in)) + centers[labels]
        self.name = "tiny_mlp"
        self.d_in, self.hidden, self.classes = d_in, hidden, classes
        self.dataset = SyntheticDataset(features=feats, labels=labels)
        self.group_layout = {"w1": hidden * d_in, "w2": classes * hidden}
        self.is_scale_invariant = {"w1": True, "w2": False}

    def init_params(self, rng: np.random.Generator, scale: float = 1.0) -> List[ParamGroup]:
        w1 = rng.standard_normal((self.hidden, self.d_in)) * (scale / np.sqrt(self.d_in))
        w2 = rng.standard_normal((self.classes, self.hidden)) * (scale / np.sqrt(self.hidden))
        return [ParamGroup("w1", w1.ravel()), ParamGroup("w2", w2.ravel())]

    def _weights(self, params):
        vals = self._check(params)
        w1 = vals["w1"].reshape(self.hidden, self.d_in)
        w2 = vals["w2"].reshape(self.classes, self.hidden)
        return w1, w2

    def _batch(self, batch):
        if batch is None:
            batch = np.arange(self.dataset.n)
        batch = np.asarray(batch)
        if batch.size < 2:
            raise ValueError("batch normalization needs batch size >= 2")
        return self.dataset.features[batch], self.dataset.labels[batch]

    def _forward(self, w1, w2, X):
        z = X @ w1.T
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        s = np.sqrt(np.maximum(var, BN_VAR_FLOOR))
        nz = (z - mu) / s
        a = np.maximum(nz, 0.0)
        logits = a @ w2.T
        lmax = logits.max(axis=1, keepdims=True)
        logz = lmax[:, 0] + np.log(np.exp(logits - lmax).sum(axis=1))
        return z, var, s, nz, a, logits, logz

    def eval(self, params, batch=None) -> float:
        w1, w2 = self._weights(params)
        X, y = self._batch(batch)
        _, _, _, _, _, logits, logz = self._forward(w1, w2, X)
        return float(np.mean(logz - logits[np.arange(len(y)), y]))

    def grad(self, params, batch=None) -> GradientSet:
        w1, w2 = self._weights(params)
        X, y = self._batch(batch)
        B = len(y)
        _, var, s, nz, a, logits, logz = self._forward(w1, w2, X)
        dlogits = np.exp(logits - logz[:, None])
        dlogits[np.arange(B), y] -= 1.0
        dlogits /= B
        dw2 = dlogits.T @ a
        da = dlogits @ w2
        dn = da * (nz > 0)
        # Batch-norm backward with population statistics. When the variance
        # floor is active the std is constant, so the x-hat path drops out.
        mean_dn = dn.mean(axis=0)
        mean_dnx = (dn * nz).mean(axis=0)
        xhat_path = np.where(var < BN_VAR_FLOOR, 0.0, 1.0)
        dz = (dn - mean_dn - xhat_path * nz * mean_dnx) / s
        dw1 = dz.T @ X
        return {"w1": dw1.ravel(), "w2": dw2.ravel()}

    def accuracy(self, params) -> float:
        w1, w2 = self._weights(params)
        X, y = self._batch(None)
        _, _, _, _, _, logits, _ = self._forward(w1, w2, X)
        return float(np.mean(logits.argmax(axis=1) == y))


def tiny_mlp(d_in: int, hidden: int, classes: int, n: int, seed: int,
             separation: float = 4.0) -> Objective:
    """Two-layer batch-normalized MLP on Gaussian blobs; W1 rows are scale-invariant."""
    return _TinyMLP(d_in, hidden, classes, n, seed, separation)


def finite_difference_grad(
    obj: Objective,
    params: Sequence[ParamGroup],
    batch: Optional[np.ndarray] = None,
    h: float = 1e-5,
) -> GradientSet:
    """Central-difference gradient oracle: (f(x + h e_i) - f(x - h e_i)) / 2h."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    params = [ParamGroup(g.name, g.values.copy()) for g in params]
    out: GradientSet = {}
    for g in params:
        fd = np.empty(g.dim)
        vec = g.values
        for i in range(g.dim):
            orig = vec[i]
            vec[i] = orig + h
            fp = obj.eval(params, batch)
            vec[i] = orig - h
            fm = obj.eval(params, batch)
            vec[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(
                    f"non-finite evaluation while differencing group {g.name!r} coord {i}"
                )
            fd[i] = (fp - fm) / (2.0 * h)
        out[g.name] = fd
    return out
