"""Command-line entry point.

Exit codes: 0 success, 2 usage or capacity error, 3 a checked condition
fails, 4 runtime failure (divergence, infeasibility and the like).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .conditions import (
    EPS_GRID,
    check_condition3,
    check_eps_intersection_all,
    check_linear,
    check_realizability,
)
from .domains import Domain, DomainError, make_benchmark_domain, random_finite_domain, sample, two_atom_domain
from .experiments import (
    DEMOS,
    ExperimentConfig,
    TrainingCache,
    figure1,
    package_version,
    write_manifest,
)
from .hypotheses import CapacityError, ConstantHypothesis, HypothesisDomainError, all_tables
from .learners import ERM, ConstrainedERM, DivergenceError, InfeasibleError, NNThreshold, convergence_sweep
from .risk import Loss, inf_risk, risk_breakdown, risk_in_out, seed_streams, write_curve_csv

PRESETS = ("overlap_two_atom", "separate_two_atom", "benchmark", "random_finite")


class UsageError(Exception):
    pass


# --- argument helpers ---------------------------------------------------------


def parse_alphas(text: str) -> np.ndarray:
    """``"0,0.5,1"`` or ``"linspace:0:1:101"``."""
    if text.startswith("linspace:"):
        try:
            lo, hi, num = text.split(":")[1:]
            return np.linspace(float(lo), float(hi), int(num))
        except ValueError:
            raise UsageError(f"bad alpha grid {text!r}") from None
    try:
        a = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"bad alpha grid {text!r}") from None
    if a.size == 0 or np.any((a < 0) | (a > 1)):
        raise UsageError("alphas must be a nonempty list inside [0, 1]")
    return a


def parse_int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON config; flags override its fields")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--seed-count", type=int, help="number of consecutive seeds for sweeps")
    p.add_argument("--alphas", help='alpha grid, e.g. "0,0.5,1" or "linspace:0:1:101"')
    p.add_argument("--n-list", help="comma-separated sample sizes")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--paper-scale", dest="scale", action="store_const", const="paper")
    scale.add_argument("--desk-scale", dest="scale", action="store_const", const="desk")


def _domain_args(p):
    p.add_argument("--domain", required=True, help=f"preset ({', '.join(PRESETS)}) or a domain JSON file")
    p.add_argument("--gap-io", type=float, help="benchmark OOD gap")
    p.add_argument("--gap-ii", type=float, help="benchmark gap between ID classes")
    p.add_argument("--x-size", type=int, help="random_finite: number of feature points")
    p.add_argument("--n-id", type=int, help="random_finite: number of ID atoms")
    p.add_argument("--k", type=int, help="random_finite: number of ID classes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oodpac", description="OOD learnability toolkit")
    parser.add_argument("--version", action="version", version=package_version())
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen-domain", help="write a domain JSON file")
    _common(p)
    _domain_args(p)

    p = sub.add_parser("eval-risk", help="ID/OOD risks and the alpha curve of one hypothesis")
    _common(p)
    _domain_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--hypothesis", help="table hypothesis JSON file")
    g.add_argument("--constant", type=int, help="constant label")

    p = sub.add_parser("inf-risk", help="infimum alpha-risk over an enumerable space")
    _common(p)
    _domain_args(p)
    p.add_argument("--space", default="all_tables", choices=["all_tables"])

    p = sub.add_parser("check-conditions", help="decide the learnability conditions exactly")
    _common(p)
    _domain_args(p)
    p.add_argument("--space", default="all_tables", choices=["all_tables"])
    p.add_argument("--tol", type=float, default=1e-9)

    for name, helptext in (("run-algorithm", "train one algorithm once"), ("sweep", "risk across sample sizes")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _domain_args(p)
        p.add_argument("--algorithm", required=True, choices=["nn_threshold", "erm", "constrained_erm"])
        p.add_argument("--m", type=int, default=1000, help="unlabelled points for constrained_erm")
        if name == "run-algorithm":
            p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("figure1", help="benchmark curves: Bayes surrogate and free-energy pipeline")
    _common(p)
    p.add_argument("--gap-io", type=float, action="append", help="repeat for several gaps (default 100 and -2)")
    p.add_argument("--gap-ii", type=float)
    p.add_argument("--iterations", type=int)

    p = sub.add_parser("demo", help="run a named demonstration")
    _common(p)
    p.add_argument("name", choices=sorted(DEMOS))
    return parser


# --- resolution ---------------------------------------------------------------


def resolve(args) -> dict:
    """Config file fields overlaid with explicit flags."""
    cfg = io.load_config(args.config) if getattr(args, "config", None) else {}
    for key, val in vars(args).items():
        if key in ("config", "command") or val is None:
            continue
        cfg[key.replace("-", "_")] = val
    cfg.setdefault("seed", 0)
    cfg.setdefault("out", "out")
    cfg.setdefault("jobs", os.cpu_count() or 1)
    cfg.setdefault("scale", "desk")
    for key in ("alphas",):
        if isinstance(cfg.get(key), str):
            cfg[key] = parse_alphas(cfg[key])
    if isinstance(cfg.get("n_list"), str):
        cfg["n_list"] = parse_int_list(cfg["n_list"])
    return cfg


def _alphas(cfg) -> np.ndarray:
    a = cfg.get("alphas")
    return np.linspace(0, 1, 101) if a is None else np.asarray(a, dtype=float)


def _seeds(cfg, default_count: int) -> list:
    base, count = int(cfg["seed"]), int(cfg.get("seed_count") or default_count)
    if "seeds" in cfg and isinstance(cfg["seeds"], list):
        return [int(s) for s in cfg["seeds"]]
    return list(range(base, base + count))


def load_domain(cfg) -> tuple[Domain, np.ndarray | None]:
    name = cfg["domain"]
    if name == "overlap_two_atom":
        return two_atom_domain(True), np.array([[0.0]])
    if name == "separate_two_atom":
        return two_atom_domain(False), np.array([[0.0], [1.0]])
    if name == "benchmark":
        return make_benchmark_domain(cfg.get("gap_ii", 20.0), cfg.get("gap_io", -2.0)), None
    if name == "random_finite":
        rng = np.random.default_rng(int(cfg["seed"]))
        x, n_id, k = int(cfg.get("x_size", 10)), int(cfg.get("n_id", 5)), int(cfg.get("k", 1))
        return random_finite_domain(rng, x, n_id, k=k)
    path = Path(name)
    if not path.exists():
        raise UsageError(f"unknown domain {name!r}: not a preset and no such file")
    dom = io.domain_from_dict(io.read_json(path))
    return dom, _feature_set(dom)


def _feature_set(dom: Domain):
    if dom.kind != "discrete":
        return None
    pts = np.vstack([dom.id_joint.marginal.points, dom.ood_joint.marginal.points])
    return np.unique(pts, axis=0)


def _space(dom, feats):
    if feats is None:
        raise UsageError("table spaces need a discrete domain")
    return all_tables(feats, dom.k)


def _out(cfg) -> Path:
    p = Path(cfg["out"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _manifest(cfg, name, outputs, seeds=()):
    echo = {k: v for k, v in cfg.items() if k not in ("out", "jobs")}
    write_manifest(_out(cfg), name, echo, seeds, outputs)


# --- commands -----------------------------------------------------------------


def cmd_gen_domain(cfg) -> int:
    dom, _ = load_domain(cfg)
    p = io.write_json(_out(cfg) / "domain.json", io.domain_to_dict(dom))
    _manifest(cfg, "gen-domain", [p], [cfg["seed"]])
    print(p)
    return 0


def cmd_eval_risk(cfg) -> int:
    dom, _ = load_domain(cfg)
    if cfg.get("constant") is not None:
        h = ConstantHypothesis(cfg["constant"])
    else:
        h = io.table_from_dict(io.read_json(cfg["hypothesis"]))
    alphas = _alphas(cfg)
    rb = risk_breakdown(h, dom, alphas=alphas)
    p = _out(cfg) / "risk_curve.csv"
    write_curve_csv(p, alphas, [v for _, v in rb.alpha_curve])
    _manifest(cfg, "eval-risk", [p])
    print(f"r_in={rb.r_in:.9g} r_out={rb.r_out:.9g}")
    return 0


def cmd_inf_risk(cfg) -> int:
    dom, feats = load_domain(cfg)
    space = _space(dom, feats)
    alphas = _alphas(cfg)
    certs = [inf_risk(space, dom, a) for a in alphas]
    p = _out(cfg) / "inf_risk.csv"
    write_curve_csv(p, alphas, [c.value for c in certs])
    argmins = io.write_json(
        _out(cfg) / "inf_argmin.json",
        [{"alpha": float(a), "value": c.value, "argmin": sorted(map(list, c.argmin_labels))} for a, c in zip(alphas, certs)],
    )
    _manifest(cfg, "inf-risk", [p, argmins])
    print(p)
    return 0


def cmd_check_conditions(cfg) -> int:
    dom, feats = load_domain(cfg)
    space = _space(dom, feats)
    alpha_grid = _alphas(cfg) if cfg.get("alphas") is not None else None
    lin = check_linear(space, dom, alpha_grid, tol=cfg.get("tol", 1e-9))
    eps = check_eps_intersection_all(space, dom, EPS_GRID)
    real, witness = check_realizability(space, dom)
    c3 = check_condition3(Loss.zero_one(dom.k), dom.k)
    report = {
        "linear": lin.as_dict(),
        "eps_intersection": eps.as_dict(),
        "realizability": {"condition": "realizability", "holds": real,
                          "witness": None if witness is None else witness.labels.tolist()},
        "condition3": {"condition": "condition3", "holds": c3},
    }
    p = io.write_json(_out(cfg) / "conditions.json", report)
    _manifest(cfg, "check-conditions", [p])
    for name, r in report.items():
        extra = f" violating_alpha={r['violating_alpha']}" if r.get("violating_alpha") is not None else ""
        print(f"{name}: {'holds' if r['holds'] else 'fails'}{extra}")
    return 0 if lin.holds and eps.holds else 3


def _algorithm(cfg, dom, feats):
    name = cfg["algorithm"]
    if feats is None:
        raise UsageError(f"{name} needs a discrete domain")
    if name == "nn_threshold":
        if dom.k != 1:
            raise UsageError("nn_threshold is defined for k = 1")
        return NNThreshold(feats)
    space = all_tables(feats, dom.k)
    if name == "erm":
        return ERM(space)
    return ConstrainedERM(space, int(cfg.get("m", 1000)), base_points=feats)


def cmd_run_algorithm(cfg) -> int:
    dom, feats = load_domain(cfg)
    alg = _algorithm(cfg, dom, feats)
    data_ss, rng = seed_streams(int(cfg["seed"]))
    X, y = sample(dom.id_joint, int(cfg["n"]), data_ss)
    h = alg(X, y, rng)
    r_in, r_out = risk_in_out(h, dom)
    out = _out(cfg)
    hp = io.write_json(out / "hypothesis.json", io.table_to_dict(h))
    rp = io.write_json(out / "risk.json", {"r_in": r_in, "r_out": r_out})
    _manifest(cfg, "run-algorithm", [hp, rp], [cfg["seed"]])
    print(f"r_in={r_in:.9g} r_out={r_out:.9g}")
    return 0


def cmd_sweep(cfg) -> int:
    dom, feats = load_domain(cfg)
    alg = _algorithm(cfg, dom, feats)
    n_list = cfg.get("n_list") or [10, 50, 200, 2000]
    seeds = _seeds(cfg, 20)
    rep = convergence_sweep(alg, dom, n_list, seeds, _alphas(cfg), jobs=int(cfg["jobs"]))
    p = _out(cfg) / "convergence.csv"
    rep.write_csv(p)
    _manifest(cfg, "sweep", [p], seeds)
    for n, s in zip(rep.n_list, rep.sup_mean()):
        print(f"n={n} sup_alpha_mean_risk={s:.9g}")
    return 0


def cmd_figure1(cfg) -> int:
    fields = {}
    if cfg["scale"] == "paper":
        base = ExperimentConfig.paper_scale()
    else:
        base = ExperimentConfig()
    for key in ("gap_ii", "n_list", "alphas"):
        if cfg.get(key) is not None:
            fields[key] = cfg[key]
    if cfg.get("seed_count") is not None or cfg.get("seeds") is not None or cfg["seed"] != 0:
        fields["seeds"] = _seeds(cfg, len(base.seeds))
    train = base.train
    if cfg.get("iterations") is not None:
        train = replace(train, iterations=int(cfg["iterations"]))
    if isinstance(cfg.get("train"), dict):
        train = replace(train, **cfg["train"])
    fields.update(train=train, out_dir=str(_out(cfg)), jobs=int(cfg["jobs"]))
    gaps = cfg.get("gap_io") or [100.0, -2.0]
    gaps = gaps if isinstance(gaps, list) else [gaps]
    cache = TrainingCache()
    for g in gaps:
        res = figure1(replace(base, gap_io=float(g), **fields), cache)
        print(f"gap_io={g:g}: dashed max over alpha {np.round(res.dashed_max(), 4).tolist()}; "
              f"max deviation from surrogate {np.round(res.max_deviation(), 4).tolist()}")
        for p in res.paths:
            print(p)
    return 0


def cmd_demo(cfg) -> int:
    fn = DEMOS[cfg["name"]]
    kwargs = {"out_dir": str(_out(cfg))}
    if cfg.get("alphas") is not None:
        kwargs["alphas"] = _alphas(cfg)
    res = fn(**kwargs)
    for p in res.paths:
        print(p)
    return 0


COMMANDS = {
    "gen-domain": cmd_gen_domain,
    "eval-risk": cmd_eval_risk,
    "inf-risk": cmd_inf_risk,
    "check-conditions": cmd_check_conditions,
    "run-algorithm": cmd_run_algorithm,
    "sweep": cmd_sweep,
    "figure1": cmd_figure1,
    "demo": cmd_demo,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("oodpac: error: a subcommand is required", file=sys.stderr)
        return 2
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, CapacityError, DomainError, HypothesisDomainError, FileNotFoundError, ValueError) as exc:
        print(f"oodpac: error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, InfeasibleError, RuntimeError, FloatingPointError) as exc:
        print(f"oodpac: runtime error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
