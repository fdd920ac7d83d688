"""TOML configuration for tables and experiments, and run manifests.

Table file::

    [table]
    dim = 1
    max_cell_traversal = 1000000
    [[table.disks]]
    center = [0.5, 0.5]
    radius = 0.4

Experiment file (adds to the table, or replaces it with ``[step]``)::

    [experiment]
    system = "billiard"
    n_max = 100000
    checkpoints = [1000, 10000, 100000]
    trajectories = 1000
    seed = 1

    [normalization]
    kind = "billiard_log"
    d = 1

    [[observables]]
    name = "local_time"
    beta = [{cell = [0], value = 1.0}]

A ``[step]`` section holds either ``name = "lazy1d"``, an explicit
``support = [{offset = [..], prob = ..}, ...]`` or
``stable = {alpha = 1.5, cutoff = 10000}``.  Unknown keys are rejected.
"""
import hashlib
import json
import platform

import numpy as np
import tomli
import tomli_w

from .geometry import BilliardTable, Disk
from .observables import NormalizationSeq, ObservableSpec
from .rw_oracle import StepDistribution, named_step, stable_step_builder


class ConfigError(ValueError):
    pass


def _check_keys(section, allowed, where):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown field(s) in [{where}]: {', '.join(sorted(unknown))}")


def load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"malformed TOML in {path}: {e}") from None


def table_from_dict(doc):
    sec = doc.get("table")
    if sec is None:
        raise ConfigError("missing [table] section")
    _check_keys(sec, {"dim", "disks", "max_cell_traversal", "direction_search_height"}, "table")
    disks = []
    for i, d in enumerate(sec.get("disks", [])):
        _check_keys(d, {"center", "radius"}, f"table.disks[{i}]")
        try:
            (cx, cy), r = d["center"], d["radius"]
        except (KeyError, ValueError, TypeError):
            raise ConfigError(f"disk {i} needs center = [x, y] and radius") from None
        disks.append(Disk(float(cx), float(cy), float(r)))
    try:
        return BilliardTable(int(sec.get("dim", 2)), tuple(disks), int(sec.get("max_cell_traversal", 10**6)),
                             int(sec.get("direction_search_height", 5)))
    except ValueError as e:
        raise ConfigError(str(e)) from None


def table_to_dict(table):
    return {"table": {"dim": table.dim, "max_cell_traversal": table.max_cell_traversal,
                      "direction_search_height": table.direction_search_height,
                      "disks": [{"center": [d.cx, d.cy], "radius": d.r} for d in table.disks]}}


def step_from_dict(sec):
    _check_keys(sec, {"name", "support", "stable"}, "step")
    if sum(k in sec for k in ("name", "support", "stable")) != 1:
        raise ConfigError("[step] needs exactly one of name, support, stable")
    if "name" in sec:
        try:
            return named_step(sec["name"])
        except ValueError as e:
            raise ConfigError(str(e)) from None
    if "stable" in sec:
        st = sec["stable"]
        _check_keys(st, {"alpha", "cutoff"}, "step.stable")
        return stable_step_builder(float(st["alpha"]), int(st["cutoff"]))
    try:
        return StepDistribution.from_config(sec["support"])
    except ValueError as e:
        raise ConfigError(str(e)) from None


def step_to_dict(step, source=None):
    if source is not None:
        return dict(source)
    if step.name in ("lazy1d", "lazy2d", "srw1d", "right1d"):
        return {"name": step.name}
    return {"support": step.to_config()}


def experiment_from_dict(doc):
    from .stats import ExperimentConfig

    _check_keys(doc, {"experiment", "normalization", "observables", "table", "step", "flow", "limits"}, "top level")
    ex = doc.get("experiment")
    if ex is None:
        raise ConfigError("missing [experiment] section")
    _check_keys(ex, {"system", "n_max", "checkpoints", "trajectories", "seed", "mode", "moments", "times", "joint"},
                "experiment")
    norm = doc.get("normalization", {})
    _check_keys(norm, {"kind", "d", "alpha", "c"}, "normalization")
    specs = []
    for i, ob in enumerate(doc.get("observables", [])):
        _check_keys(ob, {"name", "beta", "eta"}, f"observables[{i}]")
        specs.append(ObservableSpec.from_config(ob.get("beta", []), ob.get("eta", 0.0), ob.get("name", f"obs{i}")))
    flow = doc.get("flow", {})
    _check_keys(flow, {"t_max", "watched_cells"}, "flow")
    lim = doc.get("limits", {})
    _check_keys(lim, {"phi0", "sigma_sq"}, "limits")
    system = ex.get("system", "billiard")
    table = table_from_dict(doc) if "table" in doc else None
    step = step_from_dict(doc["step"]) if "step" in doc else None
    d = table.dim if table is not None else (step.dim if step is not None else 1)
    try:
        seq = NormalizationSeq(int(norm.get("d", d)), float(norm.get("alpha", 2.0)),
                               norm.get("kind", "billiard_log"), float(norm.get("c", 1.0)))
        n_max = int(ex["n_max"])
        cfg = ExperimentConfig(
            system=system, specs=specs, seq=seq, n_max=n_max,
            checkpoints=[int(c) for c in ex.get("checkpoints", [n_max])],
            trajectories=int(ex.get("trajectories", 0)), seed=int(ex.get("seed", 0)), table=table, step=step,
            mode=ex.get("mode", "mc"), moments=int(ex.get("moments", 4)),
            times=tuple(float(t) for t in ex.get("times", [])), joint=bool(ex.get("joint", False)),
            watched_cells=tuple(tuple(int(x) for x in c) for c in flow.get("watched_cells", [])),
            t_max=float(flow.get("t_max", 0.0)), phi0=lim.get("phi0"), sigma_sq=lim.get("sigma_sq"))
    except KeyError as e:
        raise ConfigError(f"missing field {e}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    cfg._step_source = doc.get("step")
    return cfg


def experiment_to_dict(cfg):
    doc = {"experiment": {"system": cfg.system, "n_max": cfg.n_max, "checkpoints": list(map(int, cfg.checkpoints)),
                          "trajectories": cfg.trajectories, "seed": cfg.seed, "mode": cfg.mode,
                          "moments": cfg.moments, "times": list(cfg.times), "joint": cfg.joint},
           "normalization": {"kind": cfg.seq.kind, "d": cfg.seq.d, "alpha": cfg.seq.alpha, "c": cfg.seq.c},
           "observables": [{"name": s.name, "eta": s.eta, "beta": s.to_config()} for s in cfg.specs]}
    if cfg.table is not None:
        doc.update(table_to_dict(cfg.table))
    if cfg.step is not None:
        doc["step"] = step_to_dict(cfg.step, getattr(cfg, "_step_source", None))
    if cfg.watched_cells or cfg.t_max:
        doc["flow"] = {"t_max": cfg.t_max, "watched_cells": [list(c) for c in cfg.watched_cells]}
    lim = {k: v for k, v in (("phi0", cfg.phi0), ("sigma_sq", cfg.sigma_sq)) if v is not None}
    if lim:
        doc["limits"] = lim
    return doc


def dumps(doc):
    return tomli_w.dumps(doc)


def manifest(config_doc, seed, outputs=()):
    """Reproduction record: config hash, seed, library versions, outputs."""
    import numba
    import scipy

    from . import __version__

    blob = json.dumps(config_doc, sort_keys=True, default=str).encode()
    return {"config_hash": hashlib.sha256(blob).hexdigest()[:16], "seed": seed, "config": config_doc,
            "versions": {"lorentzgas": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "numba": numba.__version__},
            "outputs": list(outputs)}
