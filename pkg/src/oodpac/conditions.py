"""Exact checks of learnability conditions on finite instances.

All checks enumerate a :class:`~oodpac.hypotheses.TableSpace` over a discrete
domain; nothing here is estimated by sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domains import Domain, OodDecomposition, make_domain
from .hypotheses import TableSpace
from .risk import ARGMIN_TOL, Loss, _loss_for, cost_tables, risk_profiles

EPS_GRID = (1.0, 0.1, 0.01, 0.001)


class ConditionArgumentError(ValueError):
    pass


@dataclass
class ConditionReport:
    condition: str
    holds: bool
    max_deviation: float = 0.0
    witness: object = None
    violating_alpha: float | None = None
    tolerance: float | None = None
    note: str = ""
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        w = self.witness
        if w is not None and hasattr(w, "labels"):
            w = [int(v) for v in w.labels]
        return {
            "condition": self.condition,
            "holds": bool(self.holds),
            "max_deviation": float(self.max_deviation),
            "violating_alpha": self.violating_alpha,
            "witness": w,
            "tolerance": self.tolerance,
            "note": self.note,
        }


def _lower_envelope_kinks(r_in: np.ndarray, r_out: np.ndarray) -> np.ndarray:
    """Alphas in (0, 1) where the minimum of the affine risk lines bends.

    The lines are ``(1 - a) * r_in + a * r_out``; only Pareto-minimal profiles
    matter, and the bends sit where consecutive lower-hull vertices cross.
    """
    pts = np.unique(np.stack([r_in, r_out], axis=1), axis=0)
    # sort by r_in ascending; keep strictly decreasing r_out (Pareto front)
    front = []
    for a, b in pts:
        if not front or b < front[-1][1]:
            front.append((a, b))
    hull = []
    for p in front:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    kinks = []
    for (a1, b1), (a2, b2) in zip(hull, hull[1:]):
        den = (a2 - a1) - (b2 - b1)
        if den != 0:
            t = (a2 - a1) / den
            if 0 < t < 1:
                kinks.append(t)
    return np.array(kinks)


def linear_deviation(space: TableSpace, domain: Domain, alphas, loss: Loss | None = None):
    """Deviation of the inf alpha-risk from the line through its endpoints.

    Returns ``(alphas, inf_curve, linear_form)``.
    """
    r_in, r_out = risk_profiles(space, domain, loss)
    a = np.asarray(alphas, dtype=float)
    inf_curve = np.min((1 - a)[:, None] * r_in[None, :] + a[:, None] * r_out[None, :], axis=1)
    linear = (1 - a) * r_in.min() + a * r_out.min()
    return a, inf_curve, linear


def check_linear(
    space: TableSpace, domain: Domain, alpha_grid=None, tol: float = 1e-9, loss: Loss | None = None
) -> ConditionReport:
    """Linear condition: inf alpha-risk equals the alpha-mix of the two infima.

    The default grid is 101 uniform points plus the exact bends of the
    inf curve.
    """
    if alpha_grid is None:
        r_in, r_out = risk_profiles(space, domain, loss)
        alpha_grid = np.union1d(np.linspace(0, 1, 101), _lower_envelope_kinks(r_in, r_out))
    a, inf_curve, linear = linear_deviation(space, domain, alpha_grid, loss)
    dev = inf_curve - linear
    i = int(np.argmax(dev))
    holds = bool(dev[i] <= tol)
    return ConditionReport(
        "linear",
        holds,
        max_deviation=float(max(dev[i], 0.0)),
        violating_alpha=None if holds else float(a[i]),
        tolerance=tol,
        note=f"{len(a)} alpha grid points",
        details={"alphas": a, "inf_curve": inf_curve, "linear_form": linear},
    )


def _best_member(space, ok: np.ndarray, excess: np.ndarray):
    """Member of ``ok`` with the smallest worst-case excess; first in order on ties."""
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return None
    return space.hypothesis(space.table_array()[idx[np.argmin(excess[idx])]])


def check_eps_intersection(
    space: TableSpace, domain: Domain, eps: float, loss: Loss | None = None
) -> ConditionReport:
    """Some hypothesis is ``2 eps``-optimal for ``r_in`` and ``r_out`` at once."""
    r_in, r_out = risk_profiles(space, domain, loss)
    excess = np.maximum(r_in - r_in.min(), r_out - r_out.min())
    w = _best_member(space, excess <= 2 * eps + ARGMIN_TOL, excess)
    return ConditionReport("eps_intersection", w is not None, witness=w, tolerance=eps)


def check_eps_intersection_all(
    space: TableSpace, domain: Domain, eps_grid: Sequence[float] = EPS_GRID, loss: Loss | None = None
) -> ConditionReport:
    """The intersection check on every point of a descending eps grid.

    "For every eps > 0" is approximated by the finest grid point.
    """
    reports = [check_eps_intersection(space, domain, e, loss) for e in eps_grid]
    failed = [r for r in reports if not r.holds]
    return ConditionReport(
        "eps_intersection_grid",
        not failed,
        witness=reports[-1].witness,
        tolerance=float(min(eps_grid)),
        note=f"eps grid {list(eps_grid)}",
        details={"per_eps": {r.tolerance: r.holds for r in reports}},
    )


def check_compatibility(
    space: TableSpace, domains: Sequence[Domain], eps: float, loss: Loss | None = None
) -> ConditionReport:
    """One hypothesis is ``eps``-optimal for ``r_in`` and ``r_out`` on every
    domain of an ID-consistent class."""
    if not domains:
        raise ConditionArgumentError("need at least one domain")
    base = domains[0].id_joint
    if any(d.id_joint != base for d in domains[1:]):
        raise ConditionArgumentError("domains in a compatibility class must share the ID joint")
    excess = np.zeros(len(space))
    for d in domains:
        r_in, r_out = risk_profiles(space, d, loss)
        excess = np.maximum(excess, np.maximum(r_in - r_in.min(), r_out - r_out.min()))
    witness = _best_member(space, excess <= eps + ARGMIN_TOL, excess)
    return ConditionReport("compatibility", witness is not None, witness=witness, tolerance=eps)


def check_condition3(loss: Loss, k: int) -> bool:
    """Predicting any ID label never costs more than predicting OOD, for every
    true ID label."""
    L = loss.table
    if len(L) != k + 1:
        raise ConditionArgumentError("loss table size must be k+1")
    id_block = L[:k, :k]
    return bool(np.all(id_block <= L[k, :k][None, :]))


def check_realizability(
    space: TableSpace, domain: Domain, loss: Loss | None = None, alpha: float | None = None
):
    """Is some hypothesis error-free?

    With ``alpha=None`` the hypothesis must have zero risk on both the ID and
    OOD joints (zero alpha-risk for every prior); otherwise zero alpha-risk at
    the given ``alpha``.  Returns ``(holds, witness)``.
    """
    if space.is_product:
        # per-point decision; the smallest zero-cost label gives the first table in order
        c_in, c_out = cost_tables(space, domain, _loss_for(domain, loss))
        if alpha is None:
            ok = (c_in <= ARGMIN_TOL) & (c_out <= ARGMIN_TOL)
        else:
            ok = (1 - alpha) * c_in + alpha * c_out <= ARGMIN_TOL
        if not ok.any(axis=1).all():
            return False, None
        return True, space.hypothesis(np.argmax(ok, axis=1) + 1)
    r_in, r_out = risk_profiles(space, domain, loss)
    if alpha is None:
        ok = (r_in <= ARGMIN_TOL) & (r_out <= ARGMIN_TOL)
    else:
        ok = (1 - alpha) * r_in + alpha * r_out <= ARGMIN_TOL
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return False, None
    return True, space.hypothesis(space.table_array()[idx[0]])


def _argmin_set(r: np.ndarray) -> set:
    return set(np.flatnonzero(r <= r.min() + ARGMIN_TOL).tolist())


def check_argmin_decomposition(space: TableSpace, decomposition: OodDecomposition, loss: Loss | None = None) -> bool:
    """argmin R_D equals the intersection of argmin R^in and every argmin R_{Q_j}."""
    ls = decomposition.label_space
    lam = decomposition.lambdas
    loss = loss or Loss.zero_one(ls.k)
    r_in = None
    r_q = []
    for q in decomposition.components:
        dom = make_domain(ls.k, decomposition.base_id, q)
        ri, ro = risk_profiles(space, dom, loss)
        r_in = ri
        r_q.append(ro)
    r_d = (1 - lam.sum()) * r_in + sum(l * r for l, r in zip(lam, r_q))
    rhs = _argmin_set(r_in)
    for r in r_q:
        rhs &= _argmin_set(r)
    return _argmin_set(r_d) == rhs


def overlap_lower_bound(domain: Domain, alpha: float, loss: Loss | None = None) -> float:
    """Lower bound on the inf alpha-risk forced by ID/OOD overlap.

    Densities are the unmixed ID and OOD atom masses (counting measure).
    ``m0`` is the smallest integer with every shared atom in
    ``{f_I >= 1/m0, f_O >= 1/m0}``; the bound is ``c_alpha * |A_m0| / m0``.
    """
    if not 0 < alpha < 1:
        raise ConditionArgumentError("alpha must lie strictly inside (0, 1)")
    if domain.kind != "discrete":
        raise ConditionArgumentError("the bound is instantiated for discrete domains")
    loss = _loss_for(domain, loss)
    L, k = loss.table, domain.k
    c_alpha = float(np.min((1 - alpha) * L[:, :k].min(axis=1) + alpha * L[:, k]))
    f_i, f_o = {}, {}
    for store, joint in ((f_i, domain.id_joint), (f_o, domain.ood_joint)):
        for p, m in zip(joint.marginal.points, joint.marginal.masses):
            if m > 0:
                store[tuple(p)] = store.get(tuple(p), 0.0) + float(m)
    shared = [min(f_i[p], f_o[p]) for p in f_i.keys() & f_o.keys()]
    if not shared:
        return 0.0
    m0 = math.ceil(1.0 / min(shared) - 1e-9)
    size = sum(1 for s in shared if s >= 1.0 / m0 - 1e-12)
    return c_alpha * size / m0
