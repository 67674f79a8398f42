"""JSON round-tripping for domains, tables, network parameters and reports,
plus the YAML/JSON config loader used by the command line."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

from .domains import Domain, JointDistribution, LabelSpace, discrete_joint, rect_joint
from .hypotheses import FcnnArchitecture, FcnnParams, TableHypothesis

FORMAT_VERSION = 1


def _joint_to_dict(j: JointDistribution) -> list:
    m = j.marginal
    if m.kind == "discrete":
        return [
            {"point": p.tolist(), "mass": float(w), "label": int(lab)}
            for p, w, lab in zip(m.points, m.masses, j.labels)
        ]
    return [
        {"lo": lo.tolist(), "hi": hi.tolist(), "weight": float(w), "label": int(lab)}
        for lo, hi, w, lab in zip(m.lo, m.hi, m.weights, j.labels)
    ]


def _joint_from_dict(comps: list) -> JointDistribution:
    if not comps:
        raise ValueError("a joint needs at least one component")
    labels = [c["label"] for c in comps]
    if all("point" in c for c in comps):
        return discrete_joint([c["point"] for c in comps], [c["mass"] for c in comps], labels)
    if all("lo" in c and "hi" in c for c in comps):
        return rect_joint([c["lo"] for c in comps], [c["hi"] for c in comps], [c["weight"] for c in comps], labels)
    raise ValueError("components must be all atoms (point, mass) or all rectangles (lo, hi, weight)")


def domain_to_dict(dom: Domain) -> dict:
    return {
        "type": "domain",
        "version": FORMAT_VERSION,
        "label_space": {"k": dom.k},
        "pi_out": dom.pi_out,
        "id": _joint_to_dict(dom.id_joint),
        "ood": _joint_to_dict(dom.ood_joint),
    }


def domain_from_dict(d: dict) -> Domain:
    ls = LabelSpace(int(d["label_space"]["k"]))
    return Domain(ls, _joint_from_dict(d["id"]), _joint_from_dict(d["ood"]), float(d.get("pi_out", 0.0)))


def table_to_dict(h: TableHypothesis) -> dict:
    return {"type": "table", "feature_set": h.feature_set.tolist(), "labels": [int(v) for v in h.labels]}


def table_from_dict(d: dict) -> TableHypothesis:
    return TableHypothesis(np.asarray(d["feature_set"], dtype=float), np.asarray(d["labels"]))


def fcnn_to_dict(arch: FcnnArchitecture, params: FcnnParams) -> dict:
    return {
        "type": "fcnn",
        "widths": list(arch.widths),
        "activation": arch.activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def fcnn_from_dict(d: dict) -> tuple[FcnnArchitecture, FcnnParams]:
    arch = FcnnArchitecture(tuple(d["widths"]), d["activation"])
    params = FcnnParams(tuple(np.asarray(w, float) for w in d["weights"]), tuple(np.asarray(b, float) for b in d["biases"]))
    params.check(arch)
    return arch, params


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, default=_default, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, default=_default, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path) -> dict:
    """Read a YAML (or JSON, which is valid YAML) config into a dict."""
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping")
    return data
