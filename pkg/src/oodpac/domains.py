"""ID/OOD domains: label spaces, discrete and rectangle-mixture marginals,
their mixtures, supports and overlaps, plus the two-dimensional benchmark.

Every distribution here carries a deterministic label per atom or per
component.  Points are stored as ``(m, d)`` float arrays; arrays are frozen
after construction so domain values can be shared freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
import numpy as np
from scipy.spatial.distance import cdist

MASS_TOL = 1e-12


class DomainError(ValueError):
    """Invalid distribution or domain construction."""


class UnsupportedCombinationError(DomainError):
    """Operation undefined for the given pair of marginal kinds."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabelSpace:
    """ID labels are ``1..k``; ``k + 1`` is the single OOD label."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"k must be a positive integer, got {self.k!r}")

    @property
    def ood_label(self) -> int:
        return self.k + 1

    @property
    def id_labels(self) -> tuple[int, ...]:
        return tuple(range(1, self.k + 1))

    @property
    def all_labels(self) -> tuple[int, ...]:
        return tuple(range(1, self.k + 2))


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite set of Dirac atoms ``points[i]`` with probability ``masses[i]``."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if pts.ndim != 2 or len(pts) != len(masses) or len(pts) == 0:
            raise DomainError("points must be (m, d) with one mass per point")
        if np.any(masses < 0) or not np.all(np.isfinite(masses)):
            raise DomainError("masses must be finite and nonnegative")
        if abs(math.fsum(masses) - 1.0) > MASS_TOL:
            raise DomainError(f"masses sum to {math.fsum(masses)!r}, not 1")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise DomainError("atom points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "masses", _frozen(masses))

    kind = "discrete"

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return self.masses

    def support_points(self) -> np.ndarray:
        return self.points[self.masses > 0]

    def __eq__(self, other):
        return (
            isinstance(other, DiscreteDistribution)
            and self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.masses, other.masses)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class UniformRectMixture:
    """Mixture of uniform distributions on axis-aligned boxes ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_2d(np.asarray(self.hi, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if lo.shape != hi.shape or len(lo) != len(w) or len(w) == 0:
            raise DomainError("lo/hi must be (m, d) with one weight per box")
        if not np.all(lo < hi):
            raise DomainError("every rectangle needs lo < hi in each dimension")
        if np.any(w < 0) or abs(math.fsum(w) - 1.0) > MASS_TOL:
            raise DomainError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "lo", _frozen(lo))
        object.__setattr__(self, "hi", _frozen(hi))
        object.__setattr__(self, "weights", _frozen(w))

    kind = "rect"

    @property
    def dim(self) -> int:
        return self.lo.shape[1]

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.hi - self.lo, axis=1)

    @property
    def densities(self) -> np.ndarray:
        """Per-component density value (weight / volume) inside its box."""
        return self.weights / self.volumes

    def __eq__(self, other):
        return (
            isinstance(other, UniformRectMixture)
            and self.lo.shape == other.lo.shape
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


Marginal = DiscreteDistribution | UniformRectMixture


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """A marginal plus one deterministic label per atom / component."""

    marginal: Marginal
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if len(labels) != len(self.marginal.weights):
            raise DomainError("need exactly one label per atom/component")
        if np.any(labels < 1):
            raise DomainError("labels start at 1")
        object.__setattr__(self, "labels", _frozen(labels, int))

    @property
    def kind(self) -> str:
        return self.marginal.kind

    @property
    def dim(self) -> int:
        return self.marginal.dim

    def __eq__(self, other):
        return (
            isinstance(other, JointDistribution)
            and self.marginal == other.marginal
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def discrete_joint(points, masses, labels) -> JointDistribution:
    return JointDistribution(DiscreteDistribution(points, masses), labels)


def rect_joint(lo, hi, weights, labels) -> JointDistribution:
    return JointDistribution(UniformRectMixture(lo, hi, weights), labels)


def point_mass(point, label: int) -> JointDistribution:
    return discrete_joint([np.atleast_1d(np.asarray(point, dtype=float))], [1.0], [label])


@dataclass(frozen=True, eq=False)
class Domain:
    """``(1 - pi_out) * id_joint + pi_out * ood_joint``."""

    label_space: LabelSpace
    id_joint: JointDistribution
    ood_joint: JointDistribution
    pi_out: float = 0.0

    def __post_init__(self):
        k = self.label_space.k
        # pi_out = 1 (pure OOD) is admitted so that R^out is an alpha-risk endpoint
        if not (0.0 <= self.pi_out <= 1.0):
            raise DomainError(f"pi_out must lie in [0, 1], got {self.pi_out!r}")
        if np.any(self.id_joint.labels > k):
            raise DomainError("ID labels must lie in 1..k")
        if np.any(self.ood_joint.labels != k + 1):
            raise DomainError("OOD joint must carry only the label k+1")
        if self.id_joint.dim != self.ood_joint.dim:
            raise DomainError("ID and OOD feature dimensions differ")

    @property
    def k(self) -> int:
        return self.label_space.k

    @property
    def kind(self) -> str:
        if self.id_joint.kind == self.ood_joint.kind:
            return self.id_joint.kind
        return "mixed"

    @property
    def dim(self) -> int:
        return self.id_joint.dim

    def mixed_components(self):
        """Components of the mixed joint as ``(joint_kind, weights, labels, parts)``.

        Returns the concatenated per-component weights (already scaled by the
        prior) and labels.  ``parts`` holds the raw geometric arrays: points for
        discrete domains, ``(lo, hi)`` for rectangle mixtures.
        """
        if self.kind == "mixed":
            raise UnsupportedCombinationError("ID and OOD marginals are of different kinds")
        a = self.pi_out
        w = np.concatenate([(1 - a) * self.id_joint.marginal.weights, a * self.ood_joint.marginal.weights])
        labels = np.concatenate([self.id_joint.labels, self.ood_joint.labels])
        if self.kind == "discrete":
            parts = np.vstack([self.id_joint.marginal.points, self.ood_joint.marginal.points])
        else:
            parts = (
                np.vstack([self.id_joint.marginal.lo, self.ood_joint.marginal.lo]),
                np.vstack([self.id_joint.marginal.hi, self.ood_joint.marginal.hi]),
            )
        return self.kind, w, labels, parts

    def mixed_density(self, x) -> np.ndarray:
        """Density of the mixed feature marginal at ``x`` (rectangle domains)."""
        if self.kind != "rect":
            raise UnsupportedCombinationError("density is defined for rectangle mixtures only")
        _, w, _, (lo, hi) = self.mixed_components()
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.all((x[:, None, :] >= lo[None]) & (x[:, None, :] <= hi[None]), axis=2)
        return inside.astype(float) @ (w / np.prod(hi - lo, axis=1))

    def mixed_marginal_atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Aggregated mixed feature marginal of a discrete domain (points, masses).

        Zero-mass atoms are dropped.
        """
        if self.kind != "discrete":
            raise UnsupportedCombinationError("atoms exist for discrete domains only")
        _, w, _, pts = self.mixed_components()
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        masses = np.zeros(len(uniq))
        np.add.at(masses, inv.reshape(-1), w)
        keep = masses > 0
        return uniq[keep], masses[keep]


@dataclass(frozen=True)
class DensitySpaceSpec:
    """Density-bounded domain family: ``1/b <= f <= b`` on the base support.

    ``f`` is the density of ``0.5 * D_XI + 0.5 * D_XO`` with respect to the
    base measure.  A discrete base measure is the uniform probability on
    ``feature_set``; the Lebesgue base lives on the union of ``boxes``.
    """

    base_measure: str
    bound_b: float
    feature_set: np.ndarray | None = None
    boxes: tuple | None = None

    def __post_init__(self):
        if self.base_measure not in ("discrete", "lebesgue"):
            raise DomainError("base_measure must be 'discrete' or 'lebesgue'")
        if not self.bound_b >= 1:
            raise DomainError("bound_b must be >= 1")
        if self.base_measure == "discrete" and self.feature_set is None:
            raise DomainError("discrete base measure needs a feature_set")

    def half_mixture_density(self, domain: Domain) -> np.ndarray:
        if self.base_measure != "discrete" or domain.kind != "discrete":
            raise UnsupportedCombinationError("only discrete density checks are implemented")
        feats = np.asarray(self.feature_set, dtype=float)
        f = np.zeros(len(feats))
        idx = {tuple(p): i for i, p in enumerate(feats)}
        for joint in (domain.id_joint, domain.ood_joint):
            for p, m in zip(joint.marginal.points, joint.marginal.masses):
                if m > 0 and tuple(p) not in idx:
                    raise DomainError(f"atom {p} lies outside the base measure's support")
                if m > 0:
                    f[idx[tuple(p)]] += 0.5 * m
        return f * len(feats)

    def contains(self, domain: Domain, tol: float = 1e-12) -> bool:
        f = self.half_mixture_density(domain)
        b = self.bound_b
        return bool(np.all(f >= 1 / b - tol) and np.all(f <= b + tol))


@dataclass(frozen=True, eq=False)
class OodDecomposition:
    """``(1 - sum(lambdas)) * base_id + sum_j lambdas[j] * components[j]``."""

    label_space: LabelSpace
    base_id: JointDistribution
    components: tuple
    lambdas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if len(lam) != len(comps) or len(comps) == 0:
            raise DomainError("need one lambda per OOD component")
        if np.any(lam < 0) or lam.sum() >= 1:
            raise DomainError("lambdas must be nonnegative with sum < 1")
        for q in comps:
            if np.any(q.labels != self.label_space.ood_label):
                raise DomainError("decomposition components must be OOD-labelled")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "lambdas", _frozen(lam))


def make_domain(k: int, id_joint: JointDistribution, ood_joint: JointDistribution, pi_out: float = 0.0) -> Domain:
    return Domain(LabelSpace(k), id_joint, ood_joint, pi_out)


def mix_alpha(domain: Domain, alpha: float) -> Domain:
    """Same ID/OOD joints, prior ``alpha`` on the OOD part."""
    if not (0.0 <= alpha <= 1.0):
        raise DomainError(f"alpha must lie in [0, 1], got {alpha!r}")
    return replace(domain, pi_out=float(alpha))


def sample(joint: JointDistribution, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` i.i.d. labelled points; returns ``(X, y)``."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    marg = joint.marginal
    if n == 0:
        return np.zeros((0, marg.dim)), np.zeros(0, dtype=int)
    comp = rng.choice(len(marg.weights), size=n, p=marg.weights)
    if marg.kind == "discrete":
        X = marg.points[comp].copy()
    else:
        u = rng.random((n, marg.dim))
        X = marg.lo[comp] + u * (marg.hi[comp] - marg.lo[comp])
    return X, joint.labels[comp].copy()


def rect_cells(lo: np.ndarray, hi: np.ndarray):
    """Arrange boxes into cells on which every box indicator is constant.

    Returns ``(cell_lo, cell_hi, member)`` with ``member[c, j]`` true when cell
    ``c`` lies inside box ``j``.  Cells outside every box are dropped.
    """
    d = lo.shape[1]
    edges = [np.unique(np.concatenate([lo[:, i], hi[:, i]])) for i in range(d)]
    grids_lo = np.meshgrid(*[e[:-1] for e in edges], indexing="ij")
    grids_hi = np.meshgrid(*[e[1:] for e in edges], indexing="ij")
    cell_lo = np.stack([g.reshape(-1) for g in grids_lo], axis=1)
    cell_hi = np.stack([g.reshape(-1) for g in grids_hi], axis=1)
    mid = 0.5 * (cell_lo + cell_hi)
    member = np.all((mid[:, None, :] > lo[None]) & (mid[:, None, :] < hi[None]), axis=2)
    keep = member.any(axis=1)
    return cell_lo[keep], cell_hi[keep], member[keep]


def overlap_measure(domain: Domain) -> float:
    """Base-measure size of ``{x : f_I(x) > 0 and f_O(x) > 0}``.

    Counting measure for discrete marginals, Lebesgue for rectangle mixtures.
    """
    kind = domain.kind
    if kind == "mixed":
        raise UnsupportedCombinationError("overlap needs both marginals of the same kind")
    idm, odm = domain.id_joint.marginal, domain.ood_joint.marginal
    if kind == "discrete":
        a = {tuple(p) for p, m in zip(idm.points, idm.masses) if m > 0}
        b = {tuple(p) for p, m in zip(odm.points, odm.masses) if m > 0}
        return float(len(a & b))
    id_on = idm.weights > 0
    ood_on = odm.weights > 0
    lo = np.vstack([idm.lo[id_on], odm.lo[ood_on]])
    hi = np.vstack([idm.hi[id_on], odm.hi[ood_on]])
    n_id = int(id_on.sum())
    cell_lo, cell_hi, member = rect_cells(lo, hi)
    both = member[:, :n_id].any(axis=1) & member[:, n_id:].any(axis=1)
    vol = np.prod(cell_hi - cell_lo, axis=1)
    return math.fsum(vol[both])


def _box_box_distance(lo1, hi1, lo2, hi2) -> np.ndarray:
    gap = np.maximum(0.0, np.maximum(lo2[None] - hi1[:, None], lo1[:, None] - hi2[None]))
    return np.sqrt(np.sum(gap**2, axis=2))


def _support_pieces(marg: Marginal):
    on = marg.weights > 0
    if marg.kind == "discrete":
        p = marg.points[on]
        return p, p
    return marg.lo[on], marg.hi[on]


def support_distance(domain: Domain) -> float:
    """Euclidean set distance between the ID and OOD supports."""
    lo1, hi1 = _support_pieces(domain.id_joint.marginal)
    lo2, hi2 = _support_pieces(domain.ood_joint.marginal)
    if domain.kind == "discrete":
        return float(cdist(lo1, lo2).min())
    # points are degenerate boxes, so the box formula covers every pairing
    return float(_box_box_distance(lo1, hi1, lo2, hi2).min())


def benchmark_offsets(gap_ii: float, n_classes: int = 10) -> np.ndarray:
    i = np.arange(1, n_classes + 1)
    return 5 + gap_ii * (i - 1) + 4 * (i - 2)


def make_benchmark_domain(gap_ii: float = 20.0, gap_io: float = -2.0) -> Domain:
    """Ten uniform 4x4 ID classes on a row plus one wide OOD band above them.

    Class ``c`` lives on ``[d_c, d_c + 4] x [1, 5]`` with equal prior; the OOD
    band covers ``[d_1 - 1, d_10 + 5] x [5 + gap_io, 10 + gap_io]``.
    ``pi_out`` is left at 0.
    """
    if not gap_ii > 0:
        raise DomainError("gap_ii must be positive")
    d = benchmark_offsets(gap_ii)
    lo = np.stack([d, np.full(10, 1.0)], axis=1)
    hi = np.stack([d + 4, np.full(10, 5.0)], axis=1)
    inter = np.all(np.minimum(hi[:, None], hi[None]) > np.maximum(lo[:, None], lo[None]), axis=2)
    np.fill_diagonal(inter, False)
    if inter.any():
        raise DomainError("ID class rectangles overlap")
    id_joint = rect_joint(lo, hi, np.full(10, 0.1), np.arange(1, 11))
    ood_joint = rect_joint(
        [[d[0] - 1, 5 + gap_io]], [[d[-1] + 5, 10 + gap_io]], [1.0], [11]
    )
    return Domain(LabelSpace(10), id_joint, ood_joint, 0.0)


def two_atom_domain(overlap: bool, pi_out: float = 0.5) -> Domain:
    """Smallest instances: ID atom ``a = 0`` (label 1) and an OOD atom at ``a``
    (overlap) or at ``b = 1`` (separate), in one dimension with ``k = 1``."""
    ood_point = 0.0 if overlap else 1.0
    return make_domain(1, point_mass([0.0], 1), point_mass([ood_point], 2), pi_out)


def random_finite_domain(
    rng: np.random.Generator,
    n_points: int,
    n_id: int,
    k: int = 1,
    dim: int = 2,
    n_ood: int | None = None,
    separate: bool = True,
    mass_range: tuple[float, float] = (1.0, 2.0),
    pi_out: float = 0.5,
) -> tuple[Domain, np.ndarray]:
    """Random finite feature set with ID atoms on ``n_id`` points and OOD atoms
    on the remaining (``separate``) or on a random subset of all points.

    Returns the domain and the feature set.
    """
    feats = np.unique(np.round(rng.random((4 * n_points, dim)), 6), axis=0)
    feats = feats[rng.permutation(len(feats))][:n_points]
    if len(feats) < n_points:
        raise DomainError("could not draw enough distinct points")
    perm = rng.permutation(n_points)
    id_idx = perm[:n_id]
    if separate:
        ood_idx = perm[n_id:] if n_ood is None else perm[n_id:n_id + n_ood]
    else:
        ood_idx = rng.choice(n_points, size=n_ood or n_points - n_id, replace=False)

    def masses(m):
        w = rng.uniform(*mass_range, size=m)
        return w / w.sum()

    id_joint = discrete_joint(feats[id_idx], masses(len(id_idx)), rng.integers(1, k + 1, size=len(id_idx)))
    ood_joint = discrete_joint(feats[ood_idx], masses(len(ood_idx)), np.full(len(ood_idx), k + 1))
    return make_domain(k, id_joint, ood_joint, pi_out), feats
