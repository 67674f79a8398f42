"""Scripted experiments: the two-dimensional benchmark curves and four small
demonstrations built on finite domains.

Each entry point returns an in-memory result and, when given an output
directory, writes CSV files plus a ``manifest.json`` recording the resolved
config, its hash, the seed list and the package version.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .conditions import check_linear, check_realizability
from .domains import (
    DensitySpaceSpec,
    Domain,
    discrete_joint,
    make_benchmark_domain,
    make_domain,
    random_finite_domain,
    sample,
    two_atom_domain,
)
from .hypotheses import TableSpace, all_tables
from .learners import (
    ConstrainedERM,
    ConvergenceReport,
    InfeasibleError,
    MmdAnchors,
    NNThreshold,
    Oracle,
    PipelineConfig,
    TrainConfig,
    constrained_erm,
    convergence_sweep,
    mmd_select,
    run_pipeline,
)
from .risk import (
    AlgorithmRisk,
    Loss,
    bayes_alpha_risk,
    expected_algorithm_risk,
    inf_risk,
    risk_grid,
    risk_in_out,
    risk_profiles,
    seed_streams,
)

BAYES_CURVE_ID = "bayes_inf_surrogate"
DESK_N = (1500, 2000, 2500)
DESK_SEEDS = tuple(range(5))
DESK_ITERATIONS = 2000
PAPER_N = (15000, 20000, 25000)
PAPER_SEEDS = tuple(range(20))
PAPER_ITERATIONS = 10000


def package_version() -> str:
    try:
        from importlib.metadata import version

        return version("oodpac")
    except Exception:  # pragma: no cover - running from a source tree
        return "0+unknown"


def default_alphas() -> np.ndarray:
    return np.linspace(0.0, 1.0, 101)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _relative(path, root) -> str:
    path, root = Path(path), Path(root)
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return str(path)


def write_manifest(out_dir, experiment: str, config: dict, seeds, outputs, notes=None, filename="manifest.json") -> Path:
    return io.write_json(
        Path(out_dir) / filename,
        {
            "experiment": experiment,
            "config": config,
            "config_hash": io.config_hash(config),
            "seeds": [int(s) for s in seeds],
            "version": package_version(),
            "outputs": sorted(_relative(p, out_dir) for p in outputs),
            "notes": notes or {},
        },
    )


# --- benchmark curves ------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "figure1"
    gap_ii: float = 20.0
    gap_io: float = 100.0
    n_list: tuple = DESK_N
    seeds: tuple = DESK_SEEDS
    alphas: tuple = tuple(default_alphas().tolist())
    out_dir: str | None = None
    train: TrainConfig = field(default_factory=lambda: TrainConfig(iterations=DESK_ITERATIONS))
    tpr: float = 0.95
    temperature: float = 1.0
    holdout_fraction: float = 0.1
    points_per_component: int = 4000
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if isinstance(self.train, dict):
            object.__setattr__(self, "train", TrainConfig(**self.train))
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be nonempty and strictly increasing")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if any(not 0 <= a <= 1 for a in self.alphas):
            raise ValueError("alphas must lie in [0, 1]")

    @classmethod
    def paper_scale(cls, **overrides) -> "ExperimentConfig":
        base = cls(n_list=PAPER_N, seeds=PAPER_SEEDS, train=TrainConfig(iterations=PAPER_ITERATIONS))
        return replace(base, **overrides)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("jobs")
        d.pop("out_dir")
        return d

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            train=replace(self.train, seed=None),
            tpr=self.tpr,
            temperature=self.temperature,
            holdout_fraction=self.holdout_fraction,
        )

    def training_key(self) -> tuple:
        """Everything that determines a trained pipeline apart from (n, seed)."""
        return (self.gap_ii, self.train, self.tpr, self.temperature, self.holdout_fraction, self.points_per_component)


def _fit_pipeline(args):
    pcfg, id_joint, n, seed, ppc = args
    data_ss, rng = seed_streams(seed)
    X, y = sample(id_joint, n, data_ss)
    h = run_pipeline(pcfg, X, y, rng)
    r_in = risk_grid(h, id_joint, Loss.zero_one(pcfg.train.widths[-1]), ppc)
    return h, r_in


class TrainingCache:
    """Trained pipelines and their ID risk keyed by configuration, n and seed.

    The benchmark's ID part does not depend on the OOD gap, so curves for
    several gaps can reuse the same networks.
    """

    def __init__(self):
        self._store: dict = {}

    def __len__(self):
        return len(self._store)

    def get_many(self, cfg: ExperimentConfig, id_joint, items: Sequence[tuple]) -> list:
        key0 = cfg.training_key()
        todo = [(n, s) for n, s in items if (key0, n, s) not in self._store]
        if todo:
            pcfg = cfg.pipeline()
            work = [(pcfg, id_joint, n, s, cfg.points_per_component) for n, s in todo]
            if cfg.jobs > 1 and len(work) > 1:
                with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                    res = list(pool.map(_fit_pipeline, work))
            else:
                res = [_fit_pipeline(w) for w in work]
            for (n, s), r in zip(todo, res):
                self._store[(key0, n, s)] = r
        return [self._store[(key0, n, s)] for n, s in items]


@dataclass
class Figure1Result:
    gap_io: float
    alphas: np.ndarray
    bayes: np.ndarray
    dashed: dict
    paths: list = field(default_factory=list)
    seconds: float = 0.0

    def curves(self) -> dict:
        out = {BAYES_CURVE_ID: (self.bayes, np.zeros_like(self.bayes))}
        for n, ar in self.dashed.items():
            out[f"free_energy_n{n}"] = (ar.mean, ar.std)
        return out

    def dashed_max(self) -> np.ndarray:
        return np.array([self.dashed[n].mean.max() for n in sorted(self.dashed)])

    def max_deviation(self) -> np.ndarray:
        return np.array([np.max(np.abs(self.dashed[n].mean - self.bayes)) for n in sorted(self.dashed)])


def _gap_tag(g: float) -> str:
    return f"gap{g:g}"


def figure1(cfg: ExperimentConfig, cache: TrainingCache | None = None) -> Figure1Result:
    """Bayes surrogate curve plus free-energy pipeline curves per n on the
    benchmark with OOD gap ``cfg.gap_io``."""
    t0 = time.perf_counter()
    if cfg.n_list[-1] > max(DESK_N) or len(cfg.seeds) > len(DESK_SEEDS):
        warnings.warn("paper-scale run: expect hours rather than minutes", RuntimeWarning, stacklevel=2)
    cache = cache if cache is not None else TrainingCache()
    dom = make_benchmark_domain(cfg.gap_ii, cfg.gap_io)
    alphas = np.asarray(cfg.alphas)
    bayes = np.array([bayes_alpha_risk(dom, a) for a in alphas])
    loss = Loss.zero_one(dom.k)
    items = [(n, s) for n in cfg.n_list for s in cfg.seeds]
    fitted = cache.get_many(cfg, dom.id_joint, items)
    per = {}
    for (n, s), (h, r_in) in zip(items, fitted):
        r_out = risk_grid(h, dom.ood_joint, loss, cfg.points_per_component)
        per[(n, s)] = (r_in, r_out)
    dashed = {}
    for n in cfg.n_list:
        r = np.array([per[(n, s)] for s in cfg.seeds])
        dashed[n] = AlgorithmRisk(n, cfg.seeds, alphas, r[:, 0], r[:, 1])
    res = Figure1Result(cfg.gap_io, alphas, bayes, dashed)
    res.seconds = time.perf_counter() - t0
    if cfg.out_dir is not None:
        res.paths = _write_figure1(cfg, res, per)
    return res


def _write_figure1(cfg: ExperimentConfig, res: Figure1Result, per: dict) -> list:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = _gap_tag(cfg.gap_io)
    curves = out / f"figure1_{tag}.csv"
    with open(curves, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "curve_id", "value", "std"])
        for cid, (vals, std) in res.curves().items():
            for a, v, s in zip(res.alphas, vals, std):
                w.writerow([_fmt(a), cid, _fmt(v), _fmt(s)])
    seeds_csv = out / f"figure1_{tag}_seeds.csv"
    with open(seeds_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "seed", "r_in", "r_out"])
        for (n, s), (ri, ro) in per.items():
            w.writerow([n, s, _fmt(ri), _fmt(ro)])
    paths = [curves, seeds_csv]
    manifest = write_manifest(
        out,
        "figure1",
        cfg.to_dict(),
        cfg.seeds,
        paths,
        notes={
            BAYES_CURVE_ID: "pointwise-optimal alpha-risk integrated exactly; a lower envelope that stands in "
            "for the infimum over the network family, not that infimum itself",
            "free_energy_n*": "mean over seeds of the alpha-risk of the trained classifier composed with the "
            "energy detector; risks integrated by midpoint quadrature",
        },
        filename=f"manifest_{tag}.json",
    )
    return paths + [manifest]


def read_figure1_csv(path) -> dict:
    """``curve_id -> (alphas, values, std)`` from a written curve file."""
    acc: dict = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            acc.setdefault(row["curve_id"], []).append((float(row["alpha"]), float(row["value"]), float(row["std"])))
    return {k: tuple(np.array(c) for c in zip(*v)) for k, v in acc.items()}


def affine_residual(alphas, values) -> float:
    """Largest gap between a curve and the line through its endpoint values.

    Requires the grid to contain both 0 and 1.
    """
    a = np.asarray(alphas, dtype=float)
    v = np.asarray(values, dtype=float)
    i0, i1 = np.flatnonzero(a == 0.0), np.flatnonzero(a == 1.0)
    if not len(i0) or not len(i1):
        raise ValueError("alpha grid must contain 0 and 1")
    line = (1 - a) * v[i0[0]] + a * v[i1[0]]
    return float(np.max(np.abs(v - line)))


# --- demonstrations --------------------------------------------------------


@dataclass
class OverlapReport:
    alphas: np.ndarray
    inf_curve: np.ndarray
    linear_form: np.ndarray
    linear_report: object
    sup_gaps: dict
    paths: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "alphas": self.alphas,
            "inf_curve": self.inf_curve,
            "linear_form": self.linear_form,
            "linear_check": self.linear_report.as_dict(),
            "sup_gap_per_hypothesis": self.sup_gaps,
        }


def demo_impossibility_overlap(alphas=None, out_dir=None) -> OverlapReport:
    """One point carrying both an ID and an OOD atom: the inf curve bends,
    so no single hypothesis tracks it."""
    alphas = default_alphas() if alphas is None else np.asarray(alphas, dtype=float)
    dom = two_atom_domain(overlap=True)
    space = all_tables(np.array([[0.0]]), 1)
    inf_curve = np.array([inf_risk(space, dom, a).value for a in alphas])
    r_in, r_out = risk_profiles(space, dom)
    linear = (1 - alphas) * r_in.min() + alphas * r_out.min()
    rep = check_linear(space, dom)
    gaps = {}
    for h, ri, ro in zip(space, r_in, r_out):
        curve = (1 - alphas) * ri + alphas * ro
        gaps[str(h.labels.tolist())] = float(np.max(curve - inf_curve))
    out = OverlapReport(alphas, inf_curve, linear, rep, gaps)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        p = d / "impossibility_overlap.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha", "inf_risk", "linear_form"])
            for a, v, l in zip(alphas, inf_curve, linear):
                w.writerow([_fmt(a), _fmt(v), _fmt(l)])
        r = io.write_json(d / "impossibility_overlap.json", out.as_dict())
        out.paths = [p, r, write_manifest(d, "impossibility_overlap", {"alphas": alphas}, [], [p, r])]
    return out


@dataclass
class SeparateReport:
    domain: Domain
    feature_set: np.ndarray
    report: ConvergenceReport
    r_out_all_zero: bool
    coupon_n: int
    coupon_zero_fraction: float
    paths: list = field(default_factory=list)


def demo_separate_learnable(
    x_size: int = 50,
    seeds: Sequence[int] = tuple(range(100)),
    n_list: Sequence[int] = (10, 50, 200, 2000),
    n_id: int = 25,
    dim: int = 2,
    domain_seed: int = 0,
    alphas=None,
    out_dir=None,
    coupon_delta: float = 0.01,
) -> SeparateReport:
    """Nearest-neighbour thresholding on a random finite domain whose ID and
    OOD atoms sit on disjoint feature points."""
    if x_size < 2:
        raise ValueError("x_size must be at least 2")
    alphas = default_alphas() if alphas is None else np.asarray(alphas, dtype=float)
    dom, feats = random_finite_domain(np.random.default_rng(domain_seed), x_size, n_id, k=1, dim=dim)
    alg = NNThreshold(feats)
    rep = convergence_sweep(alg, dom, n_list, seeds, alphas)
    zero_out = all(bool(np.all(r.r_out == 0.0)) for r in rep.rows)
    # union bound: P(some ID atom unseen) <= n_id * exp(-n * p_min) <= delta
    p_min = float(dom.id_joint.marginal.masses.min())
    n_star = int(math.ceil(math.log(n_id / coupon_delta) / p_min))
    at_star = expected_algorithm_risk(alg, dom, n_star, seeds, alphas)
    frac_zero = float(np.mean((at_star.r_in == 0) & (at_star.r_out == 0)))
    out = SeparateReport(dom, feats, rep, zero_out, n_star, frac_zero)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        p = d / "separate_convergence.csv"
        rep.write_csv(p)
        cfg = {"x_size": x_size, "n_id": n_id, "dim": dim, "domain_seed": domain_seed, "n_list": list(n_list), "alphas": alphas}
        s = io.write_json(
            d / "separate_summary.json",
            {"r_out_all_zero": zero_out, "coupon_n": n_star, "coupon_zero_fraction": frac_zero, "sup_mean": rep.sup_mean()},
        )
        out.paths = [p, s, write_manifest(d, "separate_learnable", cfg, seeds, [p, s])]
    return out


def _cluster_domains(m: int, atoms: int, k: int, spacing: float, rng: np.random.Generator):
    """``m`` discrete ID distributions on well-separated clusters plus a row
    of extra OOD points; domain ``i`` puts its OOD mass on every feature point
    outside cluster ``i``."""
    clusters = []
    for i in range(m):
        pts = np.round(rng.random((atoms, 2)), 6) + np.array([i * spacing, 0.0])
        clusters.append(pts)
    extra = np.array([[i * spacing, spacing] for i in range(m)], dtype=float)
    feats = np.vstack(clusters + [extra])
    ids, doms = [], []
    for i, pts in enumerate(clusters):
        w = rng.uniform(1, 2, size=atoms)
        idj = discrete_joint(pts, w / w.sum(), rng.integers(1, k + 1, size=atoms))
        others = np.vstack([c for j, c in enumerate(clusters) if j != i] + [extra])
        odj = discrete_joint(others, np.full(len(others), 1.0 / len(others)), np.full(len(others), k + 1))
        ids.append(idj)
        doms.append(make_domain(k, idj, odj))
    return feats, ids, doms


@dataclass
class SelectorReport:
    n_list: list
    misselection: np.ndarray
    end_to_end_sup_risk: np.ndarray
    rows: list
    min_support_distance: float
    paths: list = field(default_factory=list)


def demo_finite_id_space(
    m_distributions: int = 3,
    trials: int = 200,
    n_list: Sequence[int] = (20, 100, 500),
    anchor_size: int = 200,
    atoms: int = 6,
    k: int = 2,
    spacing: float = 8.0,
    seed: int = 0,
    alphas=None,
    out_dir=None,
) -> SelectorReport:
    """Select among anchor ID distributions by MMD and run the algorithm
    paired with the selected anchor."""
    if m_distributions < 2:
        raise ValueError("need at least two ID distributions")
    alphas = default_alphas() if alphas is None else np.asarray(alphas, dtype=float)
    rng = np.random.default_rng(seed)
    feats, ids, doms = _cluster_domains(m_distributions, atoms, k, spacing, rng)
    sep = min(
        float(np.min(np.linalg.norm(a.marginal.points[:, None] - b.marginal.points[None], axis=2)))
        for i, a in enumerate(ids)
        for b in ids[i + 1 :]
    )
    space = all_tables(feats, k)
    algs = []
    for dom in doms:
        labels = np.full(len(feats), k + 1)
        labels[space.index.lookup(dom.id_joint.marginal.points)] = dom.id_joint.labels
        algs.append(Oracle(space.hypothesis(labels)))
    anchor_ss = np.random.SeedSequence([seed, 1]).spawn(m_distributions)
    anchors = MmdAnchors([sample(j, anchor_size, s) for j, s in zip(ids, anchor_ss)], algs)
    rows, miss, e2e = [], [], []
    loss = Loss.zero_one(k)
    for n in n_list:
        wrong, risks = 0, []
        for t in range(trials):
            truth = t % m_distributions
            S = sample(ids[truth], n, np.random.SeedSequence([seed, 2, n, t]))
            sel, alg = mmd_select(S, anchors)
            rows.append((n, t, sel, truth))
            wrong += sel != truth
            h = alg(*S)
            r_in, r_out = risk_in_out(h, doms[truth], loss)
            risks.append(float(np.max((1 - alphas) * r_in + alphas * r_out)))
        miss.append(wrong / trials)
        e2e.append(float(np.mean(risks)))
    out = SelectorReport(list(n_list), np.array(miss), np.array(e2e), rows, sep)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        p = d / "selector.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "trial", "selected", "truth"])
            w.writerows(rows)
        s = io.write_json(
            d / "selector_summary.json",
            {"n_list": list(n_list), "misselection": out.misselection, "end_to_end_sup_risk": out.end_to_end_sup_risk,
             "min_support_distance": sep, "bandwidth": anchors.bandwidth},
        )
        cfg = {"m": m_distributions, "trials": trials, "n_list": list(n_list), "anchor_size": anchor_size,
               "atoms": atoms, "k": k, "spacing": spacing, "seed": seed}
        out.paths = [p, s, write_manifest(d, "finite_id_space", cfg, [seed], [p, s])]
    return out


@dataclass
class ConstrainedReport:
    density_spec: DensitySpaceSpec
    in_density_space: bool
    result: AlgorithmRisk
    max_alpha_risk: float
    realizable: bool
    overlap_realizable: bool
    overlap_infeasible: bool
    overlap_message: str
    paths: list = field(default_factory=list)


def realizable_density_instance(x_size: int = 20, n_id: int = 10, k: int = 2, bound_b: float = 2.0, seed: int = 0):
    """Separate finite domain on a uniform base measure; returns the domain
    and the density spec it satisfies."""
    rng = np.random.default_rng(seed)
    dom, feats = random_finite_domain(rng, x_size, n_id, k=k, dim=2)
    spec = DensitySpaceSpec("discrete", bound_b, feature_set=feats)
    return dom, spec


def demo_constrained_erm(
    density_spec: DensitySpaceSpec | None = None,
    domain: Domain | None = None,
    seeds: Sequence[int] = tuple(range(5)),
    n: int = 1000,
    m: int = 1000,
    base_weights=None,
    alphas=None,
    out_dir=None,
) -> ConstrainedReport:
    """Constrained ERM with unlabelled points from the base measure, plus a
    non-realizable overlap instance where the rule has no feasible output."""
    alphas = default_alphas() if alphas is None else np.asarray(alphas, dtype=float)
    if domain is None or density_spec is None:
        domain, density_spec = realizable_density_instance()
    feats = np.asarray(density_spec.feature_set, dtype=float)
    inside = density_spec.contains(domain)
    space = all_tables(feats, domain.k)
    realizable, _ = check_realizability(space, domain)
    alg = ConstrainedERM(space, m, base_points=feats, base_weights=base_weights)
    res = expected_algorithm_risk(alg, domain, n, seeds, alphas)
    curves = (1 - alphas)[None, :] * res.r_in[:, None] + alphas[None, :] * res.r_out[:, None]
    worst = float(curves.max())

    # overlap: an ID and an OOD atom on the same point
    ov = two_atom_domain(overlap=True)
    ov_space = all_tables(np.array([[0.0]]), 1)
    ov_real, _ = check_realizability(ov_space, ov)
    # realizability would put a zero-risk table among those with zero OOD risk
    _, r_out = risk_profiles(ov_space, ov)
    zero_out = TableSpace(ov_space.feature_set, ov_space.k, ov_space.table_array()[r_out == 0])
    X, y = sample(ov.id_joint, n, np.random.SeedSequence([0, 3]))
    try:
        constrained_erm(zero_out, X, y, sample(ov.ood_joint, m, 4)[0])
        infeasible, msg = False, "feasible"
    except InfeasibleError as exc:
        infeasible, msg = True, f"realizability violated: {exc}"
    out = ConstrainedReport(density_spec, inside, res, worst, realizable, ov_real, infeasible, msg)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        p = d / "constrained_erm.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "alpha", "mean", "std"])
            for a, mu, sd in res.rows():
                w.writerow([n, _fmt(a), _fmt(mu), _fmt(sd)])
        s = io.write_json(
            d / "constrained_erm_summary.json",
            {"in_density_space": inside, "realizable": realizable, "max_alpha_risk": worst,
             "overlap_realizable": ov_real, "overlap_infeasible": infeasible, "overlap_message": msg},
        )
        cfg = {"n": n, "m": m, "bound_b": density_spec.bound_b, "alphas": alphas}
        out.paths = [p, s, write_manifest(d, "constrained_erm", cfg, seeds, [p, s])]
    return out


DEMOS = {
    "impossibility-overlap": demo_impossibility_overlap,
    "separate-learnable": demo_separate_learnable,
    "finite-id-space": demo_finite_id_space,
    "constrained-erm": demo_constrained_erm,
}
