"""Experiment configuration: JSON files, shipped presets and overrides.

A config is a JSON object. Unknown keys at any level are errors, reported
with their dotted path and the closest known key. Values given on the
command line override the file, which overrides the defaults below.
"""
from __future__ import annotations

import copy
import difflib
import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional

import numpy as np

from .algorithms import ALGORITHMS
from .environment import (SuddenChangeAdversary, TableAdversary, bernoulli_scaled,
                          custom_discrete)
from .graph import GraphError, graph_from_literal
from .simulator import AlgorithmSpec, Problem

OUTPUT_ENV = "EXP3LGC_OUT"
FORMATS = ("csv", "jsonl")

_TOP = {"name", "description", "K", "d", "T", "trials", "base_seed", "context", "adversary",
        "graph", "algorithms", "output"}
_CONTEXT = {"bernoulli_scaled": {"kind", "p"}, "custom_discrete": {"kind", "support", "probs"}}
_ADVERSARY = {
    "sudden_change_synthetic": {"kind", "change_point", "scales", "stationary"},
    "custom_oblivious": {"kind", "table", "file"},
}
_ALGORITHM = {"name", "label", "eta", "gamma", "alpha_bounds"}
_OUTPUT = {"directory", "format", "checkpoints", "stride"}

DEFAULTS = {
    "trials": 1,
    "base_seed": 0,
    "context": {"kind": "bernoulli_scaled", "p": 0.5},
    "adversary": {"kind": "sudden_change_synthetic"},
    "graph": {"type": "edgeless"},
    "output": {"directory": None, "format": "csv", "checkpoints": 100, "stride": None},
}


class ConfigError(ValueError):
    pass


def _check_keys(obj: dict, allowed: set, path: str) -> None:
    for key in obj:
        if key not in allowed:
            hint = difflib.get_close_matches(key, sorted(allowed), n=1, cutoff=0.5)
            msg = f"{path}: unknown key {key!r}"
            if hint:
                msg += f" (did you mean {hint[0]!r}?)"
            raise ConfigError(msg)


def _int(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return int(value)


def _float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, DEFAULTS.get(name))
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object")
    return value


def _algorithm(entry, path: str) -> AlgorithmSpec:
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict):
        raise ConfigError(f"{path}: expected a selector string or an object")
    _check_keys(entry, _ALGORITHM, path)
    if "name" not in entry:
        raise ConfigError(f"{path}.name: missing required field")
    name = entry["name"]
    if name not in ALGORITHMS:
        hint = difflib.get_close_matches(str(name), ALGORITHMS, n=1)
        msg = f"{path}.name: unknown algorithm {name!r}; expected one of {list(ALGORITHMS)}"
        if hint:
            msg += f" (did you mean {hint[0]!r}?)"
        raise ConfigError(msg)
    eta = entry.get("eta")
    gamma = entry.get("gamma")
    if eta is not None:
        eta = _float(eta, f"{path}.eta")
        if not 0 < eta:
            raise ConfigError(f"{path}.eta: must be positive, got {eta}")
    if gamma is not None:
        gamma = _float(gamma, f"{path}.gamma")
        if not 0 <= gamma < 1:
            raise ConfigError(f"{path}.gamma: must lie in [0, 1), got {gamma}")
    if name.startswith("exp3-lgc-ix") and (eta is not None or gamma is not None):
        raise ConfigError(f"{path}: {name} uses an adaptive schedule; eta/gamma overrides not allowed")
    alpha = entry.get("alpha_bounds", "exact")
    if alpha != "exact":
        alpha = _float(alpha, f"{path}.alpha_bounds")
        if alpha < 1:
            raise ConfigError(f"{path}.alpha_bounds: must be 'exact' or a number >= 1")
    label = entry.get("label")
    if label is not None and not isinstance(label, str):
        raise ConfigError(f"{path}.label: expected a string")
    return AlgorithmSpec(name, eta, gamma, alpha, label)


@dataclass
class ExperimentConfig:
    """Validated experiment description. ``raw`` is the resolved JSON tree."""
    raw: dict
    K: int
    d: int
    T: int
    trials: int
    base_seed: int
    algorithms: list
    output_directory: Optional[str]
    output_format: str
    checkpoints: Optional[int]
    stride: Optional[int]
    source: str = "<dict>"
    _problem: Optional[Problem] = field(default=None, repr=False, compare=False)

    @classmethod
    def from_dict(cls, raw: dict, source: str = "<dict>") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object")
        raw = copy.deepcopy(raw)
        _check_keys(raw, _TOP, "config")
        for key in ("K", "d", "T", "algorithms"):
            if key not in raw:
                raise ConfigError(f"{key}: missing required field")
        K = _int(raw["K"], "K", 1)
        d = _int(raw["d"], "d", 1)
        T = _int(raw["T"], "T", 1)
        trials = _int(raw.get("trials", DEFAULTS["trials"]), "trials", 1)
        base_seed = _int(raw.get("base_seed", DEFAULTS["base_seed"]), "base_seed", 0)

        algos = raw["algorithms"]
        if not isinstance(algos, list) or not algos:
            raise ConfigError("algorithms: expected a non-empty list")
        specs = [_algorithm(a, f"algorithms[{k}]") for k, a in enumerate(algos)]
        keys = [s.key for s in specs]
        dup = sorted({k for k in keys if keys.count(k) > 1})
        if dup:
            raise ConfigError(f"algorithms: duplicate entries {dup}; set a distinct 'label'")

        out = {**DEFAULTS["output"], **_section(raw, "output")}
        _check_keys(out, _OUTPUT, "output")
        fmt = out["format"]
        if fmt not in FORMATS:
            raise ConfigError(f"output.format: expected one of {list(FORMATS)}, got {fmt!r}")
        checkpoints = out["checkpoints"]
        if checkpoints is not None:
            checkpoints = _int(checkpoints, "output.checkpoints", 1)
        stride = out["stride"]
        if stride is not None:
            stride = _int(stride, "output.stride", 1)

        cfg = cls(raw, K, d, T, trials, base_seed, specs, out["directory"], fmt, checkpoints,
                  stride, source)
        cfg._validate_sections()
        return cfg

    # -- sections ------------------------------------------------------------

    def _validate_sections(self) -> None:
        ctx = _section(self.raw, "context")
        kind = ctx.get("kind", "bernoulli_scaled")
        if kind not in _CONTEXT:
            raise ConfigError(f"context.kind: unknown kind {kind!r}; expected one of {sorted(_CONTEXT)}")
        _check_keys(ctx, _CONTEXT[kind], "context")
        adv = _section(self.raw, "adversary")
        kind = adv.get("kind", "sudden_change_synthetic")
        if kind not in _ADVERSARY:
            raise ConfigError(f"adversary.kind: unknown kind {kind!r}; expected one of {sorted(_ADVERSARY)}")
        _check_keys(adv, _ADVERSARY[kind], "adversary")
        cp = adv.get("change_point")
        if cp is not None:
            cp = _int(cp, "adversary.change_point", 0)
            if cp > self.T:
                raise ConfigError(f"adversary.change_point: {cp} exceeds T={self.T}")
        # building once surfaces every remaining domain error with its path
        self.build()

    def _context(self):
        ctx = _section(self.raw, "context")
        if ctx.get("kind", "bernoulli_scaled") == "bernoulli_scaled":
            p = _float(ctx.get("p", 0.5), "context.p")
            if not 0 < p <= 1:
                raise ConfigError(f"context.p: must lie in (0, 1], got {p}")
            return bernoulli_scaled(self.d, p)
        for key in ("support", "probs"):
            if key not in ctx:
                raise ConfigError(f"context.{key}: missing required field")
        support = np.asarray(ctx["support"], dtype=float)
        if support.ndim != 2 or support.shape[1] != self.d:
            raise ConfigError(f"context.support: expected a list of {self.d}-vectors")
        return custom_discrete(support, ctx["probs"])

    def _graph(self):
        literal = _section(self.raw, "graph")
        try:
            return graph_from_literal(literal, self.K)
        except GraphError as exc:
            raise ConfigError(f"graph: {exc}") from None

    def _adversary(self, graph, sigma):
        adv = _section(self.raw, "adversary")
        if adv.get("kind", "sudden_change_synthetic") == "sudden_change_synthetic":
            scales = adv.get("scales", [0.1, 0.05])
            if not isinstance(scales, list) or len(scales) != 2:
                raise ConfigError("adversary.scales: expected two numbers")
            scales = [_float(s, f"adversary.scales[{k}]") for k, s in enumerate(scales)]
            stationary = adv.get("stationary", False)
            if not isinstance(stationary, bool):
                raise ConfigError("adversary.stationary: expected true or false")
            return SuddenChangeAdversary(self.K, self.d, self.T, graph, adv.get("change_point"),
                                         scales, stationary, context_norm=sigma)
        if ("table" in adv) == ("file" in adv):
            raise ConfigError("adversary: custom_oblivious needs exactly one of 'table' or 'file'")
        if "file" in adv:
            path = adv["file"]
            if not os.path.isabs(path) and os.path.isfile(self.source):
                path = os.path.join(os.path.dirname(self.source), path)
            thetas = np.load(path)
        else:
            thetas = np.asarray(adv["table"], dtype=float)
        if thetas.shape != (self.T, self.K, self.d):
            raise ConfigError(f"adversary.table: shape {thetas.shape} != (T, K, d) = "
                              f"{(self.T, self.K, self.d)}")
        return TableAdversary(thetas, graph, context_norm=sigma)

    def build(self) -> Problem:
        """Context distribution and adversary for this config (cached)."""
        if self._problem is None:
            try:
                dist = self._context()
                graph = self._graph()
                adversary = self._adversary(graph, dist.norm_bound)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            self._problem = Problem(dist, adversary, self.digest())
        return self._problem

    # -- derived -------------------------------------------------------------

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, *, trials=None, horizon=None, seed=None, out=None, fmt=None,
                       change_point=None) -> "ExperimentConfig":
        """New config with command-line values taking precedence."""
        raw = copy.deepcopy(self.raw)
        if trials is not None:
            raw["trials"] = trials
        if seed is not None:
            raw["base_seed"] = seed
        if horizon is not None:
            raw["T"] = horizon
            adv = raw.get("adversary")
            # an explicit change point past the new horizon is rescaled with it
            if isinstance(adv, dict) and adv.get("change_point") is not None and change_point is None:
                old_T = self.T
                adv["change_point"] = int(adv["change_point"] * horizon // old_T)
        if change_point is not None:
            raw.setdefault("adversary", dict(DEFAULTS["adversary"]))["change_point"] = change_point
        if out is not None or fmt is not None:
            output = dict(raw.get("output", {}))
            if out is not None:
                output["directory"] = out
            if fmt is not None:
                output["format"] = fmt
            raw["output"] = output
        return ExperimentConfig.from_dict(raw, self.source)

    def output_dir(self, flag: Optional[str] = None) -> str:
        """Flag, then config file, then ``$EXP3LGC_OUT``, then ``./results``."""
        return flag or self.output_directory or os.environ.get(OUTPUT_ENV) or "results"


def preset_names() -> list[str]:
    files = resources.files("exp3lgc") / "presets"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    path = resources.files("exp3lgc") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"no preset named {name!r}; have {preset_names()}")
    return ExperimentConfig.from_dict(json.loads(path.read_text()), f"preset:{name}")


def parse_config(source: Any) -> ExperimentConfig:
    """Config from a dict, a JSON file path, JSON text or a preset name."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        return ExperimentConfig.from_dict(source)
    text = str(source)
    if os.path.isfile(text):
        with open(text) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{text}: invalid JSON ({exc})") from None
        return ExperimentConfig.from_dict(raw, text)
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc})") from None
        return ExperimentConfig.from_dict(raw, "<text>")
    if text in preset_names():
        return load_preset(text)
    raise ConfigError(f"{text!r} is neither a file, JSON text nor a preset ({preset_names()})")
