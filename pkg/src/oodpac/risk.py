"""Risk evaluation: exact sums over atoms, Monte-Carlo and grid estimates for
rectangle mixtures, enumerated infima over table spaces and the pointwise
Bayes alpha-risk used as a stand-in for expressive families.

Notation: ``r_in`` is the risk on the ID joint, ``r_out`` the risk on the OOD
joint, and the alpha-risk is ``(1 - alpha) * r_in + alpha * r_out``.
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domains import Domain, JointDistribution, UnsupportedCombinationError, rect_cells, sample
from .hypotheses import CapacityError, TableSpace

ARGMIN_TOL = 1e-12


class Loss:
    """Bounded loss table indexed ``loss(predicted, true)`` with 1-based labels."""

    def __init__(self, table):
        t = np.array(table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 2:
            raise ValueError("loss table must be square with at least two labels")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ValueError("loss must be finite and nonnegative")
        off = ~np.eye(len(t), dtype=bool)
        if np.any(np.diag(t) != 0) or np.any(t[off] <= 0):
            raise ValueError("loss must vanish exactly on the diagonal")
        t.setflags(write=False)
        self.table = t

    @classmethod
    def zero_one(cls, k: int) -> "Loss":
        return cls(1.0 - np.eye(k + 1))

    @property
    def k(self) -> int:
        return len(self.table) - 1

    @property
    def bound(self) -> float:
        return float(self.table.max())

    def __call__(self, pred, true) -> np.ndarray:
        return self.table[np.asarray(pred) - 1, np.asarray(true) - 1]

    def __repr__(self):
        return f"Loss({self.table.tolist()})"


def _loss_for(domain: Domain, loss: Loss | None) -> Loss:
    if loss is None:
        return Loss.zero_one(domain.k)
    if loss.k != domain.k:
        raise ValueError(f"loss covers k={loss.k} but the domain has k={domain.k}")
    return loss


# --- single hypothesis -----------------------------------------------------


def risk_exact(h: Callable, joint: JointDistribution, loss: Loss) -> float:
    """Expected loss of ``h`` under a discrete joint, summed with ``fsum``."""
    if joint.kind != "discrete":
        raise UnsupportedCombinationError("exact risk needs a discrete joint")
    marg = joint.marginal
    on = marg.masses > 0
    if not on.any():
        return 0.0
    pred = np.asarray(h(marg.points[on]))
    return math.fsum(marg.masses[on] * loss(pred, joint.labels[on]))


def risk_grid(h: Callable, joint: JointDistribution, loss: Loss, points_per_component: int = 20000) -> float:
    """Midpoint-rule estimate of the risk under a rectangle mixture.

    Each box gets a regular grid of roughly ``points_per_component`` cells.
    """
    if joint.kind != "rect":
        raise UnsupportedCombinationError("grid risk needs a rectangle mixture")
    marg = joint.marginal
    total = []
    for lo, hi, w, y in zip(marg.lo, marg.hi, marg.weights, joint.labels):
        if w == 0:
            continue
        side = hi - lo
        step = (np.prod(side) / points_per_component) ** (1.0 / len(side))
        counts = np.maximum(1, np.ceil(side / step).astype(int))
        axes = [a + (np.arange(c) + 0.5) * (b - a) / c for a, b, c in zip(lo, hi, counts)]
        grid = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        total.append(w * float(np.mean(loss(np.asarray(h(grid)), y))))
    return math.fsum(total)


def risk_mc(h: Callable, joint: JointDistribution, loss: Loss, n: int, seed) -> tuple[float, float]:
    """Sample-mean risk estimate and its standard error."""
    if n < 1:
        raise ValueError("n must be at least 1")
    X, y = sample(joint, n, seed)
    losses = loss(np.asarray(h(X)), y)
    se = float(np.std(losses, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return float(np.mean(losses)), se


def joint_risk(h: Callable, joint: JointDistribution, loss: Loss, **grid_kw) -> float:
    if joint.kind == "discrete":
        return risk_exact(h, joint, loss)
    return risk_grid(h, joint, loss, **grid_kw)


def risk_in_out(h: Callable, domain: Domain, loss: Loss | None = None, **grid_kw) -> tuple[float, float]:
    loss = _loss_for(domain, loss)
    return joint_risk(h, domain.id_joint, loss, **grid_kw), joint_risk(h, domain.ood_joint, loss, **grid_kw)


def alpha_risk(h: Callable, domain: Domain, alpha: float, loss: Loss | None = None) -> float:
    r_in, r_out = risk_in_out(h, domain, loss)
    return (1 - alpha) * r_in + alpha * r_out


def domain_risk(h: Callable, domain: Domain, loss: Loss | None = None) -> float:
    """Risk under the domain's own mixture prior ``pi_out``."""
    return alpha_risk(h, domain, domain.pi_out, loss)


@dataclass(frozen=True)
class RiskBreakdown:
    r_in: float
    r_out: float
    alpha_curve: tuple

    @classmethod
    def from_parts(cls, r_in: float, r_out: float, alphas: Sequence[float]) -> "RiskBreakdown":
        curve = tuple((float(a), (1 - a) * r_in + a * r_out) for a in alphas)
        return cls(float(r_in), float(r_out), curve)


def risk_breakdown(h: Callable, domain: Domain, loss: Loss | None = None, alphas=None) -> RiskBreakdown:
    alphas = np.linspace(0, 1, 101) if alphas is None else alphas
    return RiskBreakdown.from_parts(*risk_in_out(h, domain, loss), alphas)


# --- enumerable spaces -----------------------------------------------------


def cost_tables(space: TableSpace, domain: Domain, loss: Loss) -> tuple[np.ndarray, np.ndarray]:
    """Per feature point and predicted label, the ID and OOD loss mass.

    ``c_in[x, c]`` is the ID-joint mass at ``x`` weighted by the loss of
    predicting label ``c + 1``; ``c_out`` likewise for the OOD joint.
    """
    if domain.kind != "discrete":
        raise UnsupportedCombinationError("table spaces are evaluated on discrete domains")
    m, L = len(space.index), loss.k + 1
    out = []
    for joint in (domain.id_joint, domain.ood_joint):
        c = np.zeros((m, L))
        marg = joint.marginal
        on = marg.masses > 0
        if on.any():
            idx = space.index.lookup(marg.points[on])
            contrib = marg.masses[on][:, None] * loss.table[:, joint.labels[on] - 1].T
            np.add.at(c, idx, contrib)
        out.append(c)
    return out[0], out[1]


def risk_profiles(space: TableSpace, domain: Domain, loss: Loss | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(r_in, r_out)`` for every table of the space, in enumeration order."""
    loss = _loss_for(domain, loss)
    c_in, c_out = cost_tables(space, domain, loss)
    rows = space.table_array().astype(np.int64) - 1
    cols = np.arange(rows.shape[1])
    return c_in[cols, rows].sum(axis=1), c_out[cols, rows].sum(axis=1)


# each argmin member is materialised as a hypothesis object
MAX_ARGMIN = 100_000


@dataclass(frozen=True)
class InfimumCertificate:
    value: float
    argmin: tuple

    @property
    def argmin_labels(self) -> set:
        return {tuple(int(v) for v in h.labels) for h in self.argmin}


def _pointwise_argmin(space: TableSpace, cost: np.ndarray) -> InfimumCertificate:
    best = cost.min(axis=1)
    choices = [np.flatnonzero(row <= b + ARGMIN_TOL) + 1 for row, b in zip(cost, best)]
    count = math.prod(len(c) for c in choices)
    if count > MAX_ARGMIN:
        raise CapacityError(f"argmin set of size {count} exceeds the guard of {MAX_ARGMIN}")
    argmin = tuple(space.hypothesis(np.array(r)) for r in itertools.product(*choices))
    return InfimumCertificate(math.fsum(best), argmin)


def inf_risk(
    space: TableSpace, domain: Domain, alpha: float, loss: Loss | None = None, method: str = "auto"
) -> InfimumCertificate:
    """Infimum of the alpha-risk over a table space with its full argmin set.

    ``method="enumerate"`` scans every table; ``"pointwise"`` minimises label
    by label, which is valid for product spaces only.  ``"auto"`` picks
    pointwise for product spaces.
    """
    loss = _loss_for(domain, loss)
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if method == "auto":
        method = "pointwise" if space.is_product else "enumerate"
    if method == "pointwise":
        if not space.is_product:
            raise ValueError("pointwise minimisation needs a product space")
        c_in, c_out = cost_tables(space, domain, loss)
        return _pointwise_argmin(space, (1 - alpha) * c_in + alpha * c_out)
    r_in, r_out = risk_profiles(space, domain, loss)
    r = (1 - alpha) * r_in + alpha * r_out
    value = float(r.min())
    rows = space.table_array()
    idx = np.flatnonzero(r <= value + ARGMIN_TOL)
    return InfimumCertificate(value, tuple(space.hypothesis(rows[i]) for i in idx))


# --- Bayes surrogate -------------------------------------------------------


def _pointwise_bayes(dens_in, lab_in, dens_out, alpha, loss: Loss) -> np.ndarray:
    """Per-location minimum over predicted labels of the weighted loss density.

    ``dens_in`` is ``(cells, n_id)``; ``dens_out`` is ``(cells,)``.
    """
    L = loss.table
    k1 = loss.k + 1
    # cost[c, pred] = (1-a) * sum_j dens_in[c, j] * L[pred, lab_j] + a * dens_out[c] * L[pred, k+1]
    cost = (1 - alpha) * dens_in @ L[:, lab_in - 1].T + alpha * dens_out[:, None] * L[:, k1 - 1][None, :]
    return cost.min(axis=1)


def bayes_alpha_risk(domain: Domain, alpha: float, loss: Loss | None = None) -> float:
    """Pointwise-optimal alpha-risk, integrated exactly.

    Discrete domains are summed per distinct point; rectangle mixtures are
    cut into cells where every density is constant.
    """
    loss = _loss_for(domain, loss)
    if domain.kind == "mixed":
        raise UnsupportedCombinationError("mixed marginal kinds are not supported")
    idj, odj = domain.id_joint, domain.ood_joint
    if domain.kind == "discrete":
        pts = np.vstack([idj.marginal.points, odj.marginal.points])
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        n_id = len(idj.marginal.points)
        dens_in = np.zeros((len(uniq), n_id))
        dens_in[inv[:n_id], np.arange(n_id)] = idj.marginal.masses
        dens_out = np.zeros(len(uniq))
        np.add.at(dens_out, inv[n_id:], odj.marginal.masses)
        return math.fsum(_pointwise_bayes(dens_in, idj.labels, dens_out, alpha, loss))
    im, om = idj.marginal, odj.marginal
    lo = np.vstack([im.lo, om.lo])
    hi = np.vstack([im.hi, om.hi])
    n_id = len(im.lo)
    cell_lo, cell_hi, member = rect_cells(lo, hi)
    for row in member[:, :n_id]:
        if len(np.unique(idj.labels[row])) > 1:
            raise UnsupportedCombinationError("ID boxes with different labels overlap; labelling is not deterministic")
    dens_in = member[:, :n_id] * im.densities[None, :]
    dens_out = member[:, n_id:].astype(float) @ om.densities
    vol = np.prod(cell_hi - cell_lo, axis=1)
    return math.fsum(vol * _pointwise_bayes(dens_in, idj.labels, dens_out, alpha, loss))


# --- algorithms ------------------------------------------------------------


@dataclass(frozen=True)
class AlgorithmRisk:
    """Per-seed ``r_in``/``r_out`` of a trained hypothesis and the alpha curve."""

    n: int
    seeds: tuple
    alphas: np.ndarray
    r_in: np.ndarray
    r_out: np.ndarray
    mean: np.ndarray = field(init=False)
    std: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        curves = (1 - a)[None, :] * self.r_in[:, None] + a[None, :] * self.r_out[:, None]
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "mean", curves.mean(axis=0))
        ddof = 1 if len(self.seeds) > 1 else 0
        object.__setattr__(self, "std", curves.std(axis=0, ddof=ddof))

    def rows(self):
        return [(float(a), float(m), float(s)) for a, m, s in zip(self.alphas, self.mean, self.std)]


def seed_streams(seed: int) -> tuple[np.random.SeedSequence, np.random.Generator]:
    """Independent streams for drawing the training sample and for the algorithm."""
    data_ss, alg_ss = np.random.SeedSequence(seed).spawn(2)
    return data_ss, np.random.default_rng(alg_ss)


def _one_seed(args):
    alg, domain, n, seed, loss, grid_kw = args
    data_ss, rng = seed_streams(seed)
    X, y = sample(domain.id_joint, n, data_ss)
    h = alg(X, y, rng)
    return risk_in_out(h, domain, loss, **grid_kw)


def expected_algorithm_risk(
    alg: Callable,
    domain: Domain,
    n: int,
    seeds: Sequence[int],
    alphas=None,
    loss: Loss | None = None,
    jobs: int = 1,
    **grid_kw,
) -> AlgorithmRisk:
    """Train ``alg(X, y, rng)`` on ID-only samples of size ``n``, once per seed,
    and average the resulting alpha-risk curves."""
    loss = _loss_for(domain, loss)
    alphas = np.linspace(0, 1, 101) if alphas is None else np.asarray(alphas, dtype=float)
    work = [(alg, domain, n, s, loss, grid_kw) for s in seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            res = list(pool.map(_one_seed, work))
    else:
        res = [_one_seed(w) for w in work]
    r = np.array(res, dtype=float).reshape(len(work), 2)
    return AlgorithmRisk(n, tuple(seeds), alphas, r[:, 0], r[:, 1])


def write_curve_csv(path, alphas, values, std=None, n=None, seed_count=None):
    """``alpha,value[,std,n,seed_count]`` with 9 significant digits."""
    header = ["alpha", "value"]
    extra = [("std", std), ("n", n), ("seed_count", seed_count)]
    header += [name for name, v in extra if v is not None]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, a in enumerate(alphas):
            row = [f"{a:.9g}", f"{values[i]:.9g}"]
            if std is not None:
                row.append(f"{std[i]:.9g}")
            if n is not None:
                row.append(str(n))
            if seed_count is not None:
                row.append(str(seed_count))
            w.writerow(row)
