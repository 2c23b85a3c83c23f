"""Extreme learning machine, whale optimization and their combination.

Inputs are laid out samples-as-rows: ``X`` has shape (m, d_i) and ``y``
shape (m,). A 1-D ``X`` is read as a single feature.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, NumericalError

MODEL_SCHEMA = "bathealth.elm/1"
DEFAULT_HIDDEN = 20
DEFAULT_RIDGE = 1e-8
_COND_LIMIT = 1e13


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ArgumentError(f"inputs must be 1-D or 2-D, got shape {X.shape}")
    return X


def sigmoid(z):
    # split by sign to avoid overflow in exp
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def rmse(y, y_hat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size != y_hat.size:
        raise ArgumentError(f"length mismatch {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise ArgumentError("rmse of empty sequences")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def split_train_test(n_cycles: int, train_fraction: float = 0.6) -> tuple[np.ndarray, np.ndarray]:
    """Chronological split into 0-based train and test index arrays."""
    if n_cycles < 5:
        raise ArgumentError(f"need at least 5 cycles to split, got {n_cycles}")
    if not 0.0 < train_fraction < 1.0:
        raise ArgumentError("train_fraction must lie in (0, 1)")
    n_train = int(math.floor(train_fraction * n_cycles + 1e-9))
    if n_train < 1 or n_train >= n_cycles:
        raise ArgumentError("split leaves an empty side")
    idx = np.arange(n_cycles)
    return idx[:n_train], idx[n_train:]


# --------------------------------------------------------------------------
# ELM


@dataclass(frozen=True)
class Normalizer:
    minimum: np.ndarray
    span: np.ndarray
    constant: np.ndarray  # inputs with zero training range; span forced to 1

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = hi - lo
        constant = span <= 0
        return cls(lo, np.where(constant, 1.0, span), constant)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.minimum) / self.span


@dataclass(frozen=True, eq=False)
class ElmModel:
    W: np.ndarray  # (d_h, d_i)
    b: np.ndarray  # (d_h,)
    beta: np.ndarray  # (d_h,)
    normalizer: Normalizer
    ridge: float = DEFAULT_RIDGE
    seed: int | None = None

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0]

    def hidden(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.input_dim:
            raise ArgumentError(f"model expects {self.input_dim} inputs, got {X.shape[1]}")
        # row-wise reductions rather than BLAS products, so that a row predicts
        # the same bits alone as inside a batch
        z = (self.normalizer(X)[:, None, :] * self.W[None]).sum(axis=2) + self.b
        return sigmoid(z)

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[0] < 1:
            raise ArgumentError("nothing to predict")
        return (self.hidden(X) * self.beta).sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "beta": self.beta.tolist(),
            "norm_min": self.normalizer.minimum.tolist(),
            "norm_span": self.normalizer.span.tolist(),
            "norm_constant": self.normalizer.constant.tolist(),
            "ridge": self.ridge,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ElmModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ArgumentError(f"unsupported model schema {d.get('schema')!r}")
        norm = Normalizer(np.array(d["norm_min"], float), np.array(d["norm_span"], float),
                          np.array(d["norm_constant"], bool))
        W = np.array(d["W"], float).reshape(d["hidden_dim"], d["input_dim"])
        return cls(W, np.array(d["b"], float), np.array(d["beta"], float), norm, d["ridge"], d["seed"])

    @classmethod
    def from_json(cls, text: str) -> "ElmModel":
        return cls.from_dict(json.loads(text))


def draw_first_layer(rng: np.random.Generator, d_h: int, d_i: int) -> tuple[np.ndarray, np.ndarray]:
    W = rng.uniform(-1.0, 1.0, size=(d_h, d_i))
    b = rng.uniform(-1.0, 1.0, size=d_h)
    return W, b


def solve_output_weights(H: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    """Closed-form output layer: (H^T H + ridge I) beta = H^T y."""
    G = H.T @ H
    if ridge > 0:
        G = G + ridge * np.eye(G.shape[0])
    elif np.linalg.cond(G) > _COND_LIMIT:
        raise NumericalError("hidden-layer Gram matrix is singular; use ridge > 0")
    try:
        return np.linalg.solve(G, H.T @ y)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"output-weight solve failed ({exc}); use ridge > 0") from exc


def _check_training_data(X, y):
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ArgumentError(f"{X.shape[0]} input rows but {y.size} targets")
    if y.size < 2:
        raise ArgumentError("need at least 2 training samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ArgumentError("training data contains non-finite values")
    return X, y


def fit_with_layer(X, y, W, b, ridge=DEFAULT_RIDGE, seed=None) -> ElmModel:
    X, y = _check_training_data(X, y)
    norm = Normalizer.fit(X)
    H = sigmoid(norm(X) @ W.T + b)
    beta = solve_output_weights(H, y, ridge)
    return ElmModel(np.array(W, float), np.array(b, float), beta, norm, ridge, seed)


def train_elm(X, y, d_h: int = DEFAULT_HIDDEN, ridge: float = DEFAULT_RIDGE, seed: int = 0) -> ElmModel:
    X, y = _check_training_data(X, y)
    if d_h < 1:
        raise ArgumentError("d_h must be >= 1")
    if ridge < 0:
        raise ArgumentError("ridge must be >= 0")
    W, b = draw_first_layer(np.random.default_rng(seed), d_h, X.shape[1])
    return fit_with_layer(X, y, W, b, ridge, seed)


# --------------------------------------------------------------------------
# WOA


@dataclass(frozen=True)
class WoaConfig:
    population_size: int = 20
    max_iterations: int = 30
    spiral_constant: float = 1.0
    lower: float | Sequence[float] = -1.0
    upper: float | Sequence[float] = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ArgumentError("population_size must be >= 2")
        if self.max_iterations < 1:
            raise ArgumentError("max_iterations must be >= 1")
        if np.any(np.asarray(self.lower, float) >= np.asarray(self.upper, float)):
            raise ArgumentError("WOA bounds need lower < upper")

    def bounds(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.broadcast_to(np.asarray(self.lower, float), (dim,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, float), (dim,)).copy()
        return lo, hi


@dataclass(frozen=True, eq=False)
class WoaResult:
    best: np.ndarray
    best_fitness: float
    trace: np.ndarray  # best-so-far after each iteration
    evaluations: int


def woa_optimize(fitness: Callable[[np.ndarray], float], dim: int, config: WoaConfig = WoaConfig(),
                 initial: np.ndarray | None = None, executor: Executor | None = None) -> WoaResult:
    """Minimize ``fitness`` over the config box.

    ``initial`` optionally overrides the first rows of the random starting
    population. Fitness evaluation within one iteration can be fanned out
    through ``executor``; the update step waits for every evaluation.
    """
    if dim < 1:
        raise ArgumentError("dim must be >= 1")
    rng = np.random.default_rng(config.seed)
    lo, hi = config.bounds(dim)
    s, t_max, b = config.population_size, config.max_iterations, config.spiral_constant

    def evaluate(pop):
        vals = executor.map(fitness, list(pop)) if executor else map(fitness, pop)
        return np.array([float(v) for v in vals])

    X = rng.uniform(lo, hi, size=(s, dim))
    if initial is not None:
        init = np.atleast_2d(np.asarray(initial, float))
        if init.shape[1] != dim or init.shape[0] > s:
            raise ArgumentError("initial population does not fit")
        X[: init.shape[0]] = np.clip(init, lo, hi)
    f = evaluate(X)
    k = int(np.argmin(f))
    x_star, f_star = X[k].copy(), float(f[k])
    trace = np.empty(t_max)

    for t in range(t_max):
        a = 2.0 * (1.0 - t / t_max)
        new = np.empty_like(X)
        for i in range(s):
            p = rng.random()
            if p < 0.5:
                r1 = rng.uniform(-1.0, 1.0, dim)
                r2 = rng.uniform(0.0, 2.0, dim)
                ref = X[rng.integers(s)] if a >= 1.0 else x_star
                new[i] = ref - a * r1 * np.abs(r2 * ref - X[i])
            else:
                L = rng.uniform(-1.0, 1.0, dim)
                new[i] = x_star + np.abs(x_star - X[i]) * np.exp(b * L) * np.cos(2.0 * np.pi * L)
        X = np.clip(new, lo, hi)
        f = evaluate(X)
        k = int(np.argmin(f))
        if f[k] < f_star:
            x_star, f_star = X[k].copy(), float(f[k])
        trace[t] = f_star
    return WoaResult(x_star, f_star, trace, s * (t_max + 1))


# --------------------------------------------------------------------------
# WOA-ELM


def _unpack(vec: np.ndarray, d_h: int, d_i: int):
    W = vec[: d_h * d_i].reshape(d_h, d_i)
    return W, vec[d_h * d_i :]


@dataclass(frozen=True)
class _ElmFitness:
    Xn: np.ndarray
    y: np.ndarray
    d_h: int
    ridge: float
    fit_rows: np.ndarray | None = None
    score_rows: np.ndarray | None = None

    def __call__(self, vec: np.ndarray) -> float:
        W, b = _unpack(vec, self.d_h, self.Xn.shape[1])
        H = sigmoid(self.Xn @ W.T + b)
        fit = slice(None) if self.fit_rows is None else self.fit_rows
        score = slice(None) if self.score_rows is None else self.score_rows
        try:
            beta = solve_output_weights(H[fit], self.y[fit], self.ridge)
        except NumericalError:
            return math.inf
        return rmse(self.y[score], H[score] @ beta)


def train_woa_elm(X, y, d_h: int = DEFAULT_HIDDEN, woa: WoaConfig | None = None,
                  ridge: float = DEFAULT_RIDGE, seed: int = 0, fitness: str = "train",
                  holdout_fraction: float = 0.2, executor: Executor | None = None) -> ElmModel:
    """ELM whose first layer is tuned by WOA.

    ``fitness="train"`` scores candidates by training RMSE; ``"holdout"``
    solves the output layer on the leading part of the training rows and
    scores on the trailing ``holdout_fraction``. Member 0 of the starting
    population is the plain ELM draw for ``seed``.
    """
    X, y = _check_training_data(X, y)
    if d_h < 1:
        raise ArgumentError("d_h must be >= 1")
    if ridge < 0:
        raise ArgumentError("ridge must be >= 0")
    d_i = X.shape[1]
    woa = WoaConfig(seed=seed) if woa is None else woa
    norm = Normalizer.fit(X)
    Xn = norm(X)
    if fitness == "train":
        obj = _ElmFitness(Xn, y, d_h, ridge)
    elif fitness == "holdout":
        n_fit = int(math.floor((1.0 - holdout_fraction) * y.size))
        if n_fit < 1 or n_fit >= y.size:
            raise ArgumentError("holdout split leaves an empty side")
        idx = np.arange(y.size)
        obj = _ElmFitness(Xn, y, d_h, ridge, idx[:n_fit], idx[n_fit:])
    else:
        raise ArgumentError(f"unknown fitness {fitness!r}")
    W0, b0 = draw_first_layer(np.random.default_rng(seed), d_h, d_i)
    result = woa_optimize(obj, d_h * (d_i + 1), woa, initial=np.concatenate([W0.ravel(), b0]),
                          executor=executor)
    W, b = _unpack(result.best, d_h, d_i)
    return fit_with_layer(X, y, W, b, ridge, seed)
