"""Experiment spec files (YAML) for the command-line front end.

Example::

    scenario:
      M: 256
      L: 1
      true_doas: [-3, 2, 75]
      amplitudes_db: [12, 22, 20]
      grid: {start: -90, stop: 90, step: 0.5}
    snr_db: [0, 10, 20]
    trials: 10
    seed: 7
    algorithms:
      - {name: bsbl, T: 500, gamma: 0.6}
      - {name: bsbl_topk, kind: bsbl, top_k: true}
      - {name: biht, kind: biht, iters: 100}

Validation errors carry the file name and line of the offending key.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .baselines import BihtConfig
from .bsbl import SolverConfig
from .doa import Algorithm, Scenario


class ConfigError(ValueError):
    def __init__(self, message, source="<spec>", line=None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class _Mapping(dict):
    line = None

    def __init__(self):
        super().__init__()
        self.lines = {}


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _Mapping()
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


@dataclass(frozen=True)
class RunSpec:
    scenario: Scenario
    algorithms: tuple
    snr_db: tuple
    trials: int = 10
    seed: int = 0
    out: str | None = None
    threads: int = 1


_SCENARIO_KEYS = {"M", "L", "true_doas", "amplitudes_db", "grid", "d_over_lambda"}
_TOP_KEYS = {"scenario", "algorithms", "snr_db", "trials", "seed", "out", "threads"}
_BSBL_KEYS = {"a", "b", "gamma", "T", "alpha_init", "alpha_max", "jitter", "tol", "full_covariance"}
_BIHT_KEYS = {"tau", "iters", "K"}
_ALG_KEYS = {"name", "kind", "mismatched", "top_k"}


class _Reader:
    def __init__(self, source):
        self.source = source

    def fail(self, msg, mapping=None, key=None):
        line = None
        if mapping is not None:
            line = mapping.lines.get(key, mapping.line) if isinstance(mapping, _Mapping) else None
        raise ConfigError(msg, self.source, line)

    def check_keys(self, mapping, allowed, where):
        for key in mapping:
            if key not in allowed:
                self.fail(f"unknown key {key!r} in {where}", mapping, key)

    def number(self, mapping, key, default=None, *, integer=False, positive=False, where=""):
        if key not in mapping:
            if default is None:
                self.fail(f"missing required key {where}{key}", mapping)
            return default
        v = mapping[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{where}{key} must be a number, got {v!r}", mapping, key)
        if integer and int(v) != v:
            self.fail(f"{where}{key} must be an integer, got {v!r}", mapping, key)
        if positive and v <= 0:
            self.fail(f"{where}{key} must be positive, got {v!r}", mapping, key)
        return int(v) if integer else float(v)

    def number_list(self, mapping, key, default=None, where=""):
        if key not in mapping:
            if default is None:
                self.fail(f"missing required key {where}{key}", mapping)
            return tuple(default)
        v = mapping[key]
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [v]
        if not isinstance(v, list) or not v or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            self.fail(f"{where}{key} must be a non-empty list of numbers", mapping, key)
        return tuple(float(x) for x in v)

    def flag(self, mapping, key, default=False):
        v = mapping.get(key, default)
        if not isinstance(v, bool):
            self.fail(f"{key} must be true or false", mapping, key)
        return v


def _grid(r: _Reader, sc):
    g = sc.get("grid")
    if g is None:
        return None
    if isinstance(g, list):
        return np.asarray(r.number_list(sc, "grid", where="scenario."))
    if not isinstance(g, dict):
        r.fail("scenario.grid must be a list or {start, stop, step}", sc, "grid")
    r.check_keys(g, {"start", "stop", "step"}, "scenario.grid")
    start = r.number(g, "start", where="grid.")
    stop = r.number(g, "stop", where="grid.")
    step = r.number(g, "step", positive=True, where="grid.")
    n = int(round((stop - start) / step)) + 1
    if n < 1:
        r.fail("scenario.grid is empty", sc, "grid")
    return np.linspace(start, start + (n - 1) * step, n)


def _algorithm(r: _Reader, entry, scenario: Scenario) -> Algorithm:
    if not isinstance(entry, dict):
        raise ConfigError("each algorithm must be a mapping", r.source)
    name = entry.get("name")
    if not isinstance(name, str) or not name:
        r.fail("algorithm needs a non-empty string 'name'", entry)
    kind = entry.get("kind", "biht" if name == "biht" else "bsbl")
    if kind == "bsbl":
        r.check_keys(entry, _ALG_KEYS | _BSBL_KEYS, f"algorithm {name!r}")
        kw = {}
        for key in ("a", "b", "gamma", "alpha_max", "jitter", "tol"):
            if key in entry:
                kw[key] = r.number(entry, key, where=f"{name}.")
        if "T" in entry:
            kw["T"] = r.number(entry, "T", integer=True, positive=True, where=f"{name}.")
        if "alpha_init" in entry:
            kw["alpha_init"] = r.number(entry, "alpha_init", positive=True, where=f"{name}.")
        if "full_covariance" in entry:
            kw["full_covariance"] = r.flag(entry, "full_covariance")
        try:
            cfg = SolverConfig(**kw)
        except ValueError as exc:
            r.fail(f"algorithm {name!r}: {exc}", entry)
        if scenario.L == 1 and cfg.b == 0 and cfg.a < 0.5:
            r.fail(f"algorithm {name!r}: a must be at least 1/2 when b = 0", entry, "a")
    elif kind == "biht":
        r.check_keys(entry, _ALG_KEYS | _BIHT_KEYS, f"algorithm {name!r}")
        if scenario.L != 1:
            r.fail(f"algorithm {name!r}: BIHT needs a single snapshot (scenario.L = 1)", entry)
        if r.flag(entry, "mismatched"):
            r.fail("mismatched applies to BSBL only", entry, "mismatched")
        try:
            cfg = BihtConfig(
                K=r.number(entry, "K", scenario.K, integer=True, positive=True, where=f"{name}."),
                tau=r.number(entry, "tau", 1.0, positive=True, where=f"{name}."),
                iters=r.number(entry, "iters", 100, integer=True, positive=True, where=f"{name}."),
            )
        except ValueError as exc:
            r.fail(f"algorithm {name!r}: {exc}", entry)
    else:
        r.fail(f"unknown algorithm kind {kind!r}", entry, "kind")
    return Algorithm(name, kind, cfg, mismatched=r.flag(entry, "mismatched"),
                     top_k=r.flag(entry, "top_k"))


def _seed(r: _Reader, doc) -> int:
    seed = r.number(doc, "seed", 0, integer=True)
    if seed < 0:
        r.fail("seed must be non-negative", doc, "seed")
    return seed


def parse_spec(text: str, source: str = "<spec>") -> RunSpec:
    """Parse and validate a YAML run spec."""
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", source,
                          mark.line + 1 if mark else None) from None
    if not isinstance(doc, dict):
        raise ConfigError("spec must be a mapping", source, 1)
    r = _Reader(source)
    r.check_keys(doc, _TOP_KEYS, "spec")

    sc = doc.get("scenario", _Mapping())
    if not isinstance(sc, dict):
        r.fail("scenario must be a mapping", doc, "scenario")
    r.check_keys(sc, _SCENARIO_KEYS, "scenario")
    kw = dict(
        M=r.number(sc, "M", 64, integer=True, positive=True, where="scenario."),
        L=r.number(sc, "L", 1, integer=True, positive=True, where="scenario."),
        true_doas=r.number_list(sc, "true_doas", (-3.0, 2.0, 75.0), where="scenario."),
        amplitudes_db=r.number_list(sc, "amplitudes_db", (12.0, 22.0, 20.0), where="scenario."),
        d_over_lambda=r.number(sc, "d_over_lambda", 0.5, positive=True, where="scenario."),
    )
    grid = _grid(r, sc)
    if grid is not None:
        kw["grid"] = grid
    snr = r.number_list(doc, "snr_db", (10.0,))
    kw["snr_db"] = snr[0]
    try:
        scenario = Scenario(**kw)
    except ValueError as exc:
        r.fail(f"scenario: {exc}", sc)

    algs = doc.get("algorithms")
    if not isinstance(algs, list) or not algs:
        r.fail("algorithms must be a non-empty list", doc, "algorithms")
    algorithms = tuple(_algorithm(r, entry, scenario) for entry in algs)
    names = [a.name for a in algorithms]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        r.fail(f"duplicate algorithm names: {sorted(dup)}", doc, "algorithms")

    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        r.fail("out must be a path string", doc, "out")
    return RunSpec(
        scenario=scenario,
        algorithms=algorithms,
        snr_db=snr,
        trials=r.number(doc, "trials", 10, integer=True, positive=True),
        seed=_seed(r, doc),
        out=out,
        threads=r.number(doc, "threads", 1, integer=True, positive=True),
    )


def load_spec(path) -> RunSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read spec: {exc.strerror}", str(path)) from None
    return parse_spec(text, str(path))
