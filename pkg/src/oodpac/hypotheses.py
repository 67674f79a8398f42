"""Hypotheses: lookup tables over finite feature sets, FCNN-induced
classifiers, score-threshold detectors and the ID/OOD composite.

Every hypothesis is a callable mapping an ``(n, d)`` array of points to an
integer label array of length ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy.special import logsumexp

MAX_TABLES = 10**7


class CapacityError(RuntimeError):
    """Enumeration would exceed the table-count guard."""


class HypothesisDomainError(KeyError):
    """A point was queried outside a table hypothesis' feature set."""


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None]
    return x


def _key(row) -> tuple:
    return tuple(float(v) for v in row)


class PointIndex:
    """Maps exact point coordinates to their row in a feature set."""

    def __init__(self, points):
        self.points = _as_points(points)
        self._idx = {_key(p): i for i, p in enumerate(self.points)}
        if len(self._idx) != len(self.points):
            raise ValueError("feature set points must be distinct")

    def __len__(self):
        return len(self.points)

    def __contains__(self, p):
        return _key(p) in self._idx

    def lookup(self, X) -> np.ndarray:
        X = _as_points(X)
        try:
            return np.fromiter((self._idx[_key(r)] for r in X), dtype=np.int64, count=len(X))
        except KeyError as exc:
            raise HypothesisDomainError(f"point {exc.args[0]} is not in the feature set") from None


class TableHypothesis:
    """Explicit label assignment on a finite feature set."""

    def __init__(self, feature_set, labels, index: PointIndex | None = None):
        self.index = index if index is not None else PointIndex(feature_set)
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        self.labels.setflags(write=False)
        if len(self.labels) != len(self.index):
            raise ValueError("one label per feature-set point required")

    @property
    def feature_set(self) -> np.ndarray:
        return self.index.points

    def __call__(self, X) -> np.ndarray:
        return self.labels[self.index.lookup(X)]

    def as_dict(self) -> dict:
        return {"points": self.feature_set.tolist(), "labels": self.labels.tolist()}

    def __eq__(self, other):
        return (
            isinstance(other, TableHypothesis)
            and np.array_equal(self.feature_set, other.feature_set)
            and np.array_equal(self.labels, other.labels)
        )

    def __hash__(self):
        return hash((self.feature_set.tobytes(), self.labels.tobytes()))

    def __repr__(self):
        return f"TableHypothesis(labels={self.labels.tolist()})"


class ConstantHypothesis:
    def __init__(self, label: int):
        self.label = int(label)

    def __call__(self, X) -> np.ndarray:
        return np.full(len(_as_points(X)), self.label, dtype=np.int64)

    def __repr__(self):
        return f"ConstantHypothesis({self.label})"


class TableSpace:
    """Finite family of table hypotheses over one feature set.

    Without ``tables`` the space is every assignment of ``{1..k+1}`` to the
    feature set (a product space).  Rows are ordered by mixed-radix counting
    with the first feature point as the most significant digit.
    """

    def __init__(self, feature_set, k: int, tables: np.ndarray | None = None):
        self.index = PointIndex(feature_set)
        self.k = int(k)
        if tables is not None:
            tables = np.asarray(tables, dtype=np.int8 if k < 127 else np.int64)
            if tables.ndim != 2 or tables.shape[1] != len(self.index):
                raise ValueError("tables must be (N, |feature_set|)")
            if np.any(tables < 1) or np.any(tables > self.k + 1):
                raise ValueError("table labels must lie in 1..k+1")
            tables.setflags(write=False)
        self._tables = tables

    @property
    def feature_set(self) -> np.ndarray:
        return self.index.points

    @property
    def is_product(self) -> bool:
        return self._tables is None

    def __len__(self) -> int:
        if self._tables is not None:
            return len(self._tables)
        return (self.k + 1) ** len(self.index)

    def table_array(self) -> np.ndarray:
        """All label rows, shape ``(N, m)``; enforces the capacity guard."""
        if self._tables is not None:
            return self._tables
        n = len(self)
        if n > MAX_TABLES:
            raise CapacityError(f"(k+1)^|X| = {n} exceeds the enumeration guard {MAX_TABLES}")
        m, base = len(self.index), self.k + 1
        t = np.arange(n, dtype=np.int64)
        powers = base ** np.arange(m - 1, -1, -1, dtype=np.int64)
        digits = (t[:, None] // powers[None, :]) % base
        return (digits + 1).astype(np.int8 if base < 127 else np.int64)

    def hypothesis(self, labels) -> TableHypothesis:
        return TableHypothesis(None, labels, index=self.index)

    def __iter__(self) -> Iterator[TableHypothesis]:
        for row in self.table_array():
            yield self.hypothesis(row)

    def filter(self, keep: Callable[[np.ndarray], bool]) -> "TableSpace":
        rows = self.table_array()
        mask = np.fromiter((bool(keep(r)) for r in rows), dtype=bool, count=len(rows))
        return TableSpace(self.feature_set, self.k, rows[mask])

    def without_constant(self, label: int) -> "TableSpace":
        return self.filter(lambda r: not np.all(r == label))


def all_tables(feature_set, k: int) -> TableSpace:
    return TableSpace(feature_set, k)


def tables_over(feature_set, k: int, labels) -> TableSpace:
    """Every assignment drawing from ``labels`` only (e.g. ID-only tables)."""
    labels = np.asarray(sorted(set(int(v) for v in labels)))
    m = len(PointIndex(feature_set))
    if len(labels) ** m > MAX_TABLES:
        raise CapacityError("label-restricted table space exceeds the enumeration guard")
    digits = all_tables(np.arange(m, dtype=float), len(labels) - 1).table_array().astype(np.int64) - 1
    return TableSpace(feature_set, k, labels[digits])


def enumerate_space(space: TableSpace) -> Iterator[TableHypothesis]:
    """Every table of the space exactly once, in deterministic order."""
    return iter(space)


# --- FCNN ------------------------------------------------------------------


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


ACTIVATIONS = {"relu": lambda z: np.maximum(z, 0.0), "sigmoid": _sigmoid}


@dataclass(frozen=True)
class FcnnArchitecture:
    widths: tuple
    activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 3 or min(widths) < 1:
            raise ValueError("need depth g >= 3 with positive widths")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "widths", widths)

    @property
    def depth(self) -> int:
        return len(self.widths)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]


@dataclass(frozen=True, eq=False)
class FcnnParams:
    """``weights[i]`` has shape ``(widths[i+1], widths[i])``."""

    weights: tuple
    biases: tuple

    def check(self, arch: FcnnArchitecture):
        if len(self.weights) != arch.depth - 1 or len(self.biases) != arch.depth - 1:
            raise ValueError("parameter count does not match the architecture depth")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (arch.widths[i + 1], arch.widths[i]) or b.shape != (arch.widths[i + 1],):
                raise ValueError(f"layer {i + 2} parameter shapes do not match the architecture")

    def __eq__(self, other):
        return (
            isinstance(other, FcnnParams)
            and len(self.weights) == len(other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    __hash__ = None


def fcnn_forward(arch: FcnnArchitecture, params: FcnnParams, x) -> np.ndarray:
    """Hidden layers apply the activation; the output layer is affine.

    Accepts a single point of shape ``(d,)`` or a batch ``(n, d)``.
    """
    params.check(arch)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != arch.in_dim:
        raise ValueError(f"input dimension {h.shape[-1]} != {arch.in_dim}")
    act = ACTIVATIONS[arch.activation]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i < last:
            h = act(h)
    return h[0] if single else h


def constant_params(arch: FcnnArchitecture, output) -> FcnnParams:
    """Zero weights everywhere, zero hidden biases and last bias ``output``:
    the network outputs ``output`` for every input."""
    output = np.asarray(output, dtype=float).reshape(-1)
    if output.shape != (arch.out_dim,):
        raise ValueError("output vector length must equal the last width")
    ws = tuple(np.zeros((arch.widths[i + 1], arch.widths[i])) for i in range(arch.depth - 1))
    bs = [np.zeros(arch.widths[i + 1]) for i in range(arch.depth - 1)]
    bs[-1] = output.copy()
    return FcnnParams(ws, tuple(bs))


def induced_label(scores, k_plus_1: int | None = None) -> np.ndarray | int:
    """1-based argmax; ties go to the largest maximizing index.

    Works on a vector (returns an int) or row-wise on a matrix.
    """
    s = np.asarray(scores, dtype=float)
    if s.size == 0 or s.shape[-1] == 0:
        raise ValueError("scores must be nonempty")
    if k_plus_1 is not None and s.shape[-1] != k_plus_1:
        raise ValueError(f"expected {k_plus_1} scores, got {s.shape[-1]}")
    l = s.shape[-1]
    lab = l - np.argmax(s[..., ::-1], axis=-1)
    return int(lab) if s.ndim == 1 else lab.astype(np.int64)


class FcnnClassifier:
    """Multiclass hypothesis induced by a scoring network."""

    def __init__(self, arch: FcnnArchitecture, params: FcnnParams):
        params.check(arch)
        self.arch, self.params = arch, params

    def scores(self, X) -> np.ndarray:
        return fcnn_forward(self.arch, self.params, _as_points(X))

    def __call__(self, X) -> np.ndarray:
        return induced_label(self.scores(X))


# --- scores ----------------------------------------------------------------

SCORE_KINDS = ("softmax", "temperature", "energy")


def score(f, kind: str = "softmax", T: float = 1.0) -> np.ndarray | float:
    """Softmax confidence, temperature-scaled confidence or free energy.

    Evaluated along the last axis with a max shift before exponentiation.
    """
    if kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind {kind!r}")
    if kind == "softmax":
        T = 1.0
    if not T > 0:
        raise ValueError("temperature must be positive")
    f = np.asarray(f, dtype=float)
    if f.shape[-1] < 1:
        raise ValueError("need at least one score coordinate")
    z = f / T
    lse = logsumexp(z, axis=-1)
    if kind == "energy":
        out = T * lse
    else:
        out = np.exp(np.max(z, axis=-1) - lse)
    return float(out) if np.ndim(out) == 0 else out


class ScoreClassifier:
    """Binary detector: 1 (ID) iff ``score(f(x)) >= lam``, else 2 (OOD)."""

    def __init__(self, arch: FcnnArchitecture, params: FcnnParams, kind: str, lam: float, T: float = 1.0):
        params.check(arch)
        if kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {kind!r}")
        l = arch.out_dim
        if kind in ("softmax", "temperature") and not (1.0 / l < lam < 1.0):
            raise ValueError(f"lambda must lie in (1/{l}, 1) for {kind} scores")
        if kind != "softmax" and not T > 0:
            raise ValueError("temperature must be positive")
        self.arch, self.params, self.kind, self.lam, self.T = arch, params, kind, float(lam), float(T)

    def scores(self, X) -> np.ndarray:
        f = fcnn_forward(self.arch, self.params, _as_points(X))
        return np.atleast_1d(score(f, self.kind, self.T))

    def __call__(self, X) -> np.ndarray:
        return np.where(self.scores(X) >= self.lam, 1, 2).astype(np.int64)


def classify_score(c: ScoreClassifier, x) -> np.ndarray:
    return c(x)


class CompositeHypothesis:
    """``h_in(x)`` where the detector says ID (1), ``k + 1`` where it says OOD."""

    def __init__(self, h_in: Callable, h_b: Callable, k: int):
        self.h_in, self.h_b, self.k = h_in, h_b, int(k)

    def __call__(self, X) -> np.ndarray:
        X = _as_points(X)
        b = np.asarray(self.h_b(X))
        return np.where(b == 1, np.asarray(self.h_in(X)), self.k + 1).astype(np.int64)


def compose(h: CompositeHypothesis, x) -> np.ndarray:
    return h(x)


def relabel_binary(h: Callable, x, k: int) -> np.ndarray:
    """1 where ``h`` predicts an ID label, 2 where it predicts ``k + 1``."""
    return np.where(np.asarray(h(x)) <= k, 1, 2).astype(np.int64)


def composite_space(in_space: TableSpace, b_space: TableSpace) -> TableSpace:
    """All composites of an ID table space (labels 1..k) with a binary table
    space (labels 1, 2) over the same feature set, deduplicated, in
    ``(h_in, h_b)`` enumeration order."""
    if not np.array_equal(in_space.feature_set, b_space.feature_set):
        raise ValueError("composite spaces need a shared feature set")
    k = in_space.k
    ins = in_space.table_array()
    if np.any(ins > k):
        raise ValueError("ID component tables must use labels 1..k only")
    bs = b_space.table_array()
    if np.any(bs > 2):
        raise ValueError("detector tables must use labels 1, 2 only")
    rows = np.where(bs[None, :, :] == 1, ins[:, None, :], k + 1).reshape(-1, ins.shape[1])
    _, first = np.unique(rows, axis=0, return_index=True)
    return TableSpace(in_space.feature_set, k, rows[np.sort(first)])
