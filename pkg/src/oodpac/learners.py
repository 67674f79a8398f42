"""Learning algorithms.

An algorithm is any callable ``alg(X, y, rng) -> hypothesis`` trained on
labelled ID samples only.  The classes at the bottom of the module wrap the
functional learners into that shape so sweeps can treat them uniformly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

from .domains import Domain
from .hypotheses import (
    CompositeHypothesis,
    FcnnArchitecture,
    FcnnClassifier,
    FcnnParams,
    ScoreClassifier,
    TableHypothesis,
    TableSpace,
    _as_points,
    fcnn_forward,
    score,
)
from .risk import ARGMIN_TOL, Loss, expected_algorithm_risk


class InfeasibleError(RuntimeError):
    """No hypothesis fits the ID sample with zero empirical loss."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


# --- nearest-neighbour thresholding ----------------------------------------


def nn_threshold(X, feature_set) -> TableHypothesis:
    """Label a feature point ID (1) iff its nearest sampled point is closer
    than half the minimum spacing of the feature set, else OOD (2)."""
    X = _as_points(X)
    feats = _as_points(feature_set)
    if len(X) == 0:
        raise ValueError("the ID sample must be nonempty")
    if len(feats) < 2:
        raise ValueError("need at least two feature points to define the spacing")
    d0 = pdist(feats).min()
    dist, _ = cKDTree(X).query(feats)
    return TableHypothesis(feats, np.where(dist < 0.5 * d0, 1, 2))


# --- empirical risk minimisation over table spaces -------------------------


def _empirical_costs(space: TableSpace, X, y, loss: Loss) -> np.ndarray:
    """``E[x, c]``: average loss contributed at feature point ``x`` when it is
    labelled ``c + 1``."""
    E = np.zeros((len(space.index), loss.k + 1))
    if len(X):
        idx = space.index.lookup(X)
        np.add.at(E, idx, loss.table[:, np.asarray(y) - 1].T / len(X))
    return E


def _gather(space: TableSpace, cost: np.ndarray) -> np.ndarray:
    rows = space.table_array().astype(np.int64) - 1
    return cost[np.arange(rows.shape[1]), rows].sum(axis=1)


def erm(space: TableSpace, X, y, loss: Loss | None = None) -> TableHypothesis:
    """Empirical risk minimiser; ties resolve to the earliest table."""
    loss = loss or Loss.zero_one(space.k)
    E = _empirical_costs(space, _as_points(X), y, loss)
    if space.is_product:
        return space.hypothesis(np.argmin(E, axis=1) + 1)
    r = _gather(space, E)
    i = int(np.flatnonzero(r <= r.min() + ARGMIN_TOL)[0])
    return space.hypothesis(space.table_array()[i])


def empirical_risk(h, X, y, loss: Loss) -> float:
    X = _as_points(X)
    if len(X) == 0:
        return 0.0
    return math.fsum(loss(np.asarray(h(X)), y)) / len(X)


def constrained_erm(space: TableSpace, X, y, U, loss: Loss | None = None) -> TableHypothesis:
    """Among tables with zero empirical ID loss, minimise the average loss of
    calling the unlabelled points ``U`` OOD.  Earliest table wins ties."""
    loss = loss or Loss.zero_one(space.k)
    X, U = _as_points(X), _as_points(U)
    E = _empirical_costs(space, X, y, loss)
    O = np.zeros_like(E)
    if len(U):
        counts = np.bincount(space.index.lookup(U), minlength=len(space.index)) / len(U)
        O = counts[:, None] * loss.table[:, space.k][None, :]
    if space.is_product:
        feasible = E <= ARGMIN_TOL
        if not feasible.any(axis=1).all():
            raise InfeasibleError("some sampled point carries conflicting labels")
        obj = np.where(feasible, O, np.inf)
        h = space.hypothesis(np.argmin(obj, axis=1) + 1)
    else:
        emp = _gather(space, E)
        ok = np.flatnonzero(emp <= ARGMIN_TOL)
        if len(ok) == 0:
            raise InfeasibleError("no table in the space fits the ID sample")
        obj = _gather(space, O)[ok]
        i = ok[int(np.flatnonzero(obj <= obj.min() + ARGMIN_TOL)[0])]
        h = space.hypothesis(space.table_array()[i])
    assert empirical_risk(h, X, y, loss) <= ARGMIN_TOL
    return h


# --- MMD anchor selection ---------------------------------------------------


def median_bandwidth(X) -> float:
    d = pdist(_as_points(X))
    d = d[d > 0]
    return float(np.median(d)) if len(d) else 1.0


def mmd2(A, B, bandwidth: float | None = None) -> float:
    """Squared plug-in MMD between two labelled samples.

    Kernel: Gaussian in the features times label equality.  ``A`` and ``B``
    are ``(X, y)`` pairs; ``bandwidth=None`` uses the median pairwise
    distance of the pooled features.
    """
    (Xa, ya), (Xb, yb) = A, B
    Xa, Xb = _as_points(Xa), _as_points(Xb)
    ya, yb = np.asarray(ya), np.asarray(yb)
    if len(Xa) == 0 or len(Xb) == 0:
        raise ValueError("MMD needs nonempty samples")
    if bandwidth is None:
        bandwidth = median_bandwidth(np.vstack([Xa, Xb]))
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")

    def kmean(P, p, Q, q):
        K = np.exp(-cdist(P, Q, "sqeuclidean") / (2 * bandwidth**2)) * (p[:, None] == q[None, :])
        return math.fsum(K.ravel()) / K.size

    val = kmean(Xa, ya, Xa, ya) + kmean(Xb, yb, Xb, yb) - 2 * kmean(Xa, ya, Xb, yb)
    return max(val, 0.0)


@dataclass
class MmdAnchors:
    """Reference samples, each paired with the algorithm to run when selected."""

    samples: list
    algorithms: list
    bandwidth: float | None = None

    def __post_init__(self):
        if not self.samples or len(self.samples) != len(self.algorithms):
            raise ValueError("need one algorithm per nonempty anchor list")
        if self.bandwidth is None:
            self.bandwidth = median_bandwidth(np.vstack([_as_points(X) for X, _ in self.samples]))
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError("bandwidth must be finite and positive")


def mmd_select(S, anchors: MmdAnchors):
    """Index of the anchor closest to ``S`` in MMD (smallest index on ties)
    and its algorithm."""
    vals = [mmd2(a, S, anchors.bandwidth) for a in anchors.samples]
    i = int(np.argmin(vals))
    return i, anchors.algorithms[i]


# --- FCNN training ----------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    widths: tuple = (2, 100, 100, 10)
    activation: str = "sigmoid"
    learning_rate: float = 1e-3
    iterations: int = 10000
    batch: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    seed: int | None = 0
    standardize: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    @property
    def architecture(self) -> FcnnArchitecture:
        return FcnnArchitecture(self.widths, self.activation)


def init_params(arch: FcnnArchitecture, seed) -> FcnnParams:
    """Uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` for weights and biases."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(arch.widths[:-1], arch.widths[1:]):
        r = 1.0 / math.sqrt(fan_in)
        ws.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
        bs.append(rng.uniform(-r, r, size=fan_out))
    return FcnnParams(tuple(ws), tuple(bs))


def _fold_standardization(params: FcnnParams, mu, sd) -> FcnnParams:
    w0 = params.weights[0] / sd[None, :]
    b0 = params.biases[0] - w0 @ mu
    return FcnnParams((w0,) + params.weights[1:], (b0,) + params.biases[1:])


def train_fcnn(cfg: TrainConfig, X, y) -> FcnnParams:
    """Adam on the mean squared error between network outputs and one-hot
    targets.  Input standardisation, when enabled, is folded back into the
    first layer so the returned parameters act on raw inputs."""
    arch = cfg.architecture
    X = _as_points(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[1] != arch.in_dim:
        raise ValueError("input dimension does not match the first width")
    n_out = arch.out_dim
    if len(y) and (y.min() < 1 or y.max() > n_out):
        raise ValueError(f"labels must lie in 1..{n_out}")
    params = init_params(arch, cfg.seed)
    if cfg.iterations == 0:
        return params
    mu = X.mean(axis=0) if cfg.standardize else np.zeros(X.shape[1])
    sd = X.std(axis=0) if cfg.standardize else np.ones(X.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd
    T = np.eye(n_out)[y - 1]

    ws = [w.copy() for w in params.weights]
    bs = [b.copy() for b in params.biases]
    m = [np.zeros_like(p) for p in ws + bs]
    v = [np.zeros_like(p) for p in ws + bs]
    sigmoid = arch.activation == "sigmoid"
    act = (lambda z: 0.5 * (1 + np.tanh(0.5 * z))) if sigmoid else (lambda z: np.maximum(z, 0.0))
    rng = np.random.default_rng(cfg.seed)
    n_layers = len(ws)
    b1, b2 = cfg.beta1, cfg.beta2
    for t in range(1, cfg.iterations + 1):
        if cfg.batch is None or cfg.batch >= len(Z):
            xb, tb = Z, T
        else:
            sel = rng.choice(len(Z), size=cfg.batch, replace=False)
            xb, tb = Z[sel], T[sel]
        acts = [xb]
        h = xb
        for i in range(n_layers):
            h = h @ ws[i].T + bs[i]
            if i < n_layers - 1:
                h = act(h)
            acts.append(h)
        diff = h - tb
        loss = float(np.mean(diff**2))
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss at iteration {t}")
        g = 2.0 * diff / diff.size
        grads_w, grads_b = [None] * n_layers, [None] * n_layers
        for i in range(n_layers - 1, -1, -1):
            grads_w[i] = g.T @ acts[i]
            grads_b[i] = g.sum(axis=0)
            if i > 0:
                g = g @ ws[i]
                a = acts[i]
                g = g * (a * (1 - a)) if sigmoid else g * (a > 0)
        lr_t = cfg.learning_rate * math.sqrt(1 - b2**t) / (1 - b1**t)
        for j, (p, gr) in enumerate(zip(ws + bs, grads_w + grads_b)):
            m[j] *= b1
            m[j] += (1 - b1) * gr
            v[j] *= b2
            v[j] += (1 - b2) * gr * gr
            p -= lr_t * m[j] / (np.sqrt(v[j]) + cfg.eps_hat)
    out = FcnnParams(tuple(ws), tuple(bs))
    return _fold_standardization(out, mu, sd) if cfg.standardize else out


# --- free-energy detection --------------------------------------------------


def calibrate_threshold(scores, tpr: float) -> float:
    """Lower ``(1 - tpr)``-quantile: at least a ``tpr`` fraction of ``scores``
    is ``>=`` the returned value."""
    s = np.sort(np.asarray(scores, dtype=float).reshape(-1))
    if len(s) == 0:
        raise ValueError("need at least one calibration score")
    if not 0 < tpr < 1:
        raise ValueError("tpr must lie in (0, 1)")
    return float(s[int(math.floor((1 - tpr) * (len(s) - 1)))])


def free_energy_detector(
    arch: FcnnArchitecture, params: FcnnParams, X_holdout, tpr: float = 0.95, T: float = 1.0
) -> ScoreClassifier:
    f = fcnn_forward(arch, params, _as_points(X_holdout))
    lam = calibrate_threshold(score(f, "energy", T), tpr)
    return ScoreClassifier(arch, params, "energy", lam, T)


@dataclass(frozen=True)
class PipelineConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    tpr: float = 0.95
    temperature: float = 1.0
    holdout_fraction: float = 0.1
    lambda_override: float | None = None


def run_pipeline(cfg: PipelineConfig, X, y, rng: np.random.Generator | None = None) -> CompositeHypothesis:
    """Train an ID classifier, calibrate the energy detector on a held-out ID
    split and compose the two."""
    rng = rng if rng is not None else np.random.default_rng(cfg.train.seed)
    X = _as_points(X)
    y = np.asarray(y)
    perm = rng.permutation(len(X))
    n_hold = max(1, int(round(cfg.holdout_fraction * len(X))))
    if n_hold >= len(X):
        raise ValueError("sample too small to split into train and holdout")
    hold, train = perm[:n_hold], perm[n_hold:]
    tcfg = cfg.train
    if tcfg.seed is None:
        tcfg = replace(tcfg, seed=int(rng.integers(2**31)))
    arch = tcfg.architecture
    params = train_fcnn(tcfg, X[train], y[train])
    h_in = FcnnClassifier(arch, params)
    if cfg.lambda_override is not None:
        h_b = ScoreClassifier(arch, params, "energy", cfg.lambda_override, cfg.temperature)
    else:
        h_b = free_energy_detector(arch, params, X[hold], cfg.tpr, cfg.temperature)
    return CompositeHypothesis(h_in, h_b, arch.out_dim)


# --- algorithm objects --------------------------------------------------------


class NNThreshold:
    def __init__(self, feature_set):
        self.feature_set = _as_points(feature_set)

    def __call__(self, X, y, rng=None):
        return nn_threshold(X, self.feature_set)


class ERM:
    def __init__(self, space: TableSpace, loss: Loss | None = None):
        self.space, self.loss = space, loss

    def __call__(self, X, y, rng=None):
        return erm(self.space, X, y, self.loss)


class ConstrainedERM:
    """Draws ``m`` unlabelled points from the base measure (uniform over
    ``base_points`` unless ``base_weights`` are given) on every call."""

    def __init__(self, space: TableSpace, m: int, base_points=None, base_weights=None, loss: Loss | None = None):
        if m < 1:
            raise ValueError("m must be at least 1")
        self.space, self.m, self.loss = space, int(m), loss
        self.base_points = space.feature_set if base_points is None else _as_points(base_points)
        if base_weights is not None:
            w = np.asarray(base_weights, dtype=float)
            if w.shape != (len(self.base_points),) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
                raise ValueError("base_weights must be a probability vector over base_points")
            # uniform weights take the same code path as no weights, so results match bit for bit
            base_weights = None if np.all(w == w[0]) else w
        self.base_weights = base_weights

    def __call__(self, X, y, rng):
        idx = rng.choice(len(self.base_points), size=self.m, p=self.base_weights)
        return constrained_erm(self.space, X, y, self.base_points[idx], self.loss)


class MmdSelector:
    def __init__(self, anchors: MmdAnchors):
        self.anchors = anchors
        self.last_selected: int | None = None

    def __call__(self, X, y, rng=None):
        i, alg = mmd_select((X, y), self.anchors)
        self.last_selected = i
        return alg(X, y, rng)


class FreeEnergyPipeline:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg

    def __call__(self, X, y, rng):
        return run_pipeline(self.cfg, X, y, rng)


class Oracle:
    """Ignores the data and returns a fixed hypothesis."""

    def __init__(self, h):
        self.h = h

    def __call__(self, X, y, rng=None):
        return self.h


# --- sweeps ---------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n must increase strictly across rows")

    @property
    def n_list(self) -> list:
        return [r.n for r in self.rows]

    def sup_mean(self) -> np.ndarray:
        """Mean risk maximised over alpha, per row."""
        return np.array([r.mean.max() for r in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "alpha", "mean", "std"])
            for r in self.rows:
                for a, m, s in r.rows():
                    w.writerow([r.n, f"{a:.9g}", f"{m:.9g}", f"{s:.9g}"])


def convergence_sweep(
    alg: Callable,
    domain: Domain,
    n_list: Sequence[int],
    seeds: Sequence[int],
    alphas=None,
    loss: Loss | None = None,
    jobs: int = 1,
    **grid_kw,
) -> ConvergenceReport:
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    rows = tuple(expected_algorithm_risk(alg, domain, n, seeds, alphas, loss, jobs, **grid_kw) for n in n_list)
    return ConvergenceReport(rows)
