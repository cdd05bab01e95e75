"""Experiment configuration files (TOML).

Sections and keys (defaults in parentheses)::

    [subshift]    alphabet; transitions (full shift)
    [generator]   kind = "constant" | "locally_constant" | "coordinate_series"
                  constant:          matrix
                  locally_constant:  depth (1); matrices = list by symbol, or table word -> matrix
                  coordinate_series: base, perturbation (one matrix per symbol); alpha; radius
    [measure]     type = "bernoulli" (probabilities) | "markov" (stochastic)
    [experiment]  n_min (4), n_max (14), horizon (1024), samples (50), weak_star_depth (4),
                  grouping_gap (0.05), intersect_tol (1e-3), epsilons ([1/2, 1/3, 1/4, 1/5]),
                  seed (0), enumeration_cap (2^20), weak_star_weight (1.0), exponent_weight (1.0)
    [output]      directory ("."), prefix (command name), formats (["json", "csv"])

Unknown sections or keys are rejected. Overrides have the form
``section.key=value`` with ``value`` in TOML syntax (bare words are read as
strings).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from .base_dynamics import DEFAULT_ENUMERATION_CAP, MarkovMeasure, SubshiftSpec, parse_word, validate_subshift
from .errors import ConfigError, ValidationError
from .linear_core import CocycleGenerator, CoordinateSeries, LocallyConstant
from .periodic_approx import DEFAULT_EPSILONS, ExperimentConfig

EXPERIMENT_DEFAULTS: dict[str, Any] = {
    "n_min": 4,
    "n_max": 14,
    "horizon": 1024,
    "samples": 50,
    "weak_star_depth": 4,
    "grouping_gap": 0.05,
    "intersect_tol": 1e-3,
    "epsilons": list(DEFAULT_EPSILONS),
    "seed": 0,
    "enumeration_cap": DEFAULT_ENUMERATION_CAP,
    "weak_star_weight": 1.0,
    "exponent_weight": 1.0,
}
OUTPUT_DEFAULTS: dict[str, Any] = {"directory": ".", "prefix": "", "formats": ["json", "csv"]}

SCHEMA: dict[str, set[str]] = {
    "subshift": {"alphabet", "transitions"},
    "generator": {"kind", "matrix", "depth", "matrices", "base", "perturbation", "alpha", "radius"},
    "measure": {"type", "probabilities", "stochastic"},
    "experiment": set(EXPERIMENT_DEFAULTS),
    "output": set(OUTPUT_DEFAULTS),
}
GENERATOR_KEYS = {
    "constant": {"kind", "matrix"},
    "locally_constant": {"kind", "depth", "matrices"},
    "coordinate_series": {"kind", "base", "perturbation", "alpha", "radius"},
}
INT_KEYS = {"n_min", "n_max", "horizon", "samples", "weak_star_depth", "seed", "enumeration_cap"}


@dataclass
class RunConfig:
    spec: SubshiftSpec
    gen: CocycleGenerator
    measure: MarkovMeasure | None
    experiment: dict[str, Any]
    output: dict[str, Any]
    source: str = ""
    overrides: list[str] = field(default_factory=list)

    def require_measure(self) -> MarkovMeasure:
        if self.measure is None:
            raise ConfigError("missing [measure] section")
        return self.measure

    def experiment_config(self, workers: int = 1) -> ExperimentConfig:
        e = self.experiment
        return ExperimentConfig(
            gen=self.gen,
            measure=self.require_measure(),
            n_min=e["n_min"],
            n_max=e["n_max"],
            horizon=e["horizon"],
            sample_count=e["samples"],
            weak_star_depth=e["weak_star_depth"],
            epsilons=tuple(e["epsilons"]),
            seed=e["seed"],
            grouping_gap=e["grouping_gap"],
            intersect_tol=e["intersect_tol"],
            enumeration_cap=e["enumeration_cap"],
            weak_star_weight=e["weak_star_weight"],
            exponent_weight=e["exponent_weight"],
            workers=workers,
        )


def parse_override(text: str) -> tuple[str, str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    path, raw = text.split("=", 1)
    parts = path.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"override key {path!r} must be section.key")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return parts[0], parts[1], value


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(p)!r}: {exc.strerror}") from exc
    return parse_config(text, overrides, source=str(p))


def parse_config(text: str, overrides: list[str] | None = None, source: str = "") -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    raw = copy.deepcopy(raw)
    overrides = list(overrides or [])
    for item in overrides:
        section, key, value = parse_override(item)
        raw.setdefault(section, {})
        if not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] is not a section")
        raw[section][key] = value
    try:
        return _build(raw, source, overrides)
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def _check_keys(raw: dict) -> None:
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in body:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")


def _matrix(value, key: str, d: int | None = None) -> np.ndarray:
    try:
        m = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: not a numeric matrix") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{key}: expected a square matrix, got shape {m.shape}")
    if d is not None and m.shape != (d, d):
        raise ConfigError(f"{key}: expected a {d}x{d} matrix, got {m.shape[0]}x{m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ConfigError(f"{key}: entries must be finite")
    return m


def _matrix_list(values, key: str, count: int) -> np.ndarray:
    if not isinstance(values, list) or len(values) != count:
        raise ConfigError(f"{key}: expected one matrix per symbol ({count})")
    first = _matrix(values[0], f"{key}.0")
    return np.stack([_matrix(v, f"{key}.{i}", first.shape[0]) for i, v in enumerate(values)])


def _build_spec(body: dict) -> SubshiftSpec:
    if "alphabet" not in body:
        raise ConfigError("subshift.alphabet is required")
    k = body["alphabet"]
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ConfigError("subshift.alphabet must be a positive integer")
    if "transitions" not in body:
        return SubshiftSpec.full_shift(k)
    T = np.array(body["transitions"])
    if T.shape != (k, k):
        raise ConfigError(f"subshift.transitions: expected a {k}x{k} 0/1 matrix, got shape {T.shape}")
    if not np.isin(T, (0, 1)).all():
        raise ConfigError("subshift.transitions: entries must be 0 or 1")
    return validate_subshift(T.astype(bool))


def _build_generator(body: dict, spec: SubshiftSpec) -> CocycleGenerator:
    kind = body.get("kind")
    if kind not in GENERATOR_KEYS:
        raise ConfigError(f"generator.kind must be one of {sorted(GENERATOR_KEYS)}, got {kind!r}")
    extra = set(body) - GENERATOR_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown key generator.{sorted(extra)[0]} for kind {kind!r}")
    k = spec.alphabet_size
    if kind == "constant":
        if "matrix" not in body:
            raise ConfigError("generator.matrix is required")
        return LocallyConstant.constant(_matrix(body["matrix"], "generator.matrix"), spec)
    if kind == "locally_constant":
        depth = body.get("depth", 1)
        if not isinstance(depth, int) or depth < 1:
            raise ConfigError("generator.depth must be a positive integer")
        mats = body.get("matrices")
        if mats is None:
            raise ConfigError("generator.matrices is required")
        if isinstance(mats, list):
            if depth != 1:
                raise ConfigError("generator.matrices as a list needs depth = 1; use a word table")
            stack = _matrix_list(mats, "generator.matrices", k)
            return LocallyConstant(spec, 1, {(a,): stack[a] for a in range(k)})
        if not isinstance(mats, dict):
            raise ConfigError("generator.matrices must be a list or a table")
        table, d = {}, None
        for word, value in mats.items():
            key = f"generator.matrices.{word}"
            m = _matrix(value, key, d)
            d = m.shape[0]
            try:
                table[parse_word(word)] = m
            except ValidationError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        return LocallyConstant(spec, depth, table)
    for name in ("base", "perturbation", "alpha", "radius"):
        if name not in body:
            raise ConfigError(f"generator.{name} is required")
    base = _matrix_list(body["base"], "generator.base", k)
    pert = _matrix_list(body["perturbation"], "generator.perturbation", k)
    if pert.shape != base.shape:
        raise ConfigError("generator.perturbation: shape differs from generator.base")
    return CoordinateSeries(spec, base, pert, float(body["alpha"]), int(body["radius"]))


def _build_measure(body: dict, spec: SubshiftSpec) -> MarkovMeasure:
    kind = body.get("type")
    if kind == "bernoulli":
        if set(body) - {"type", "probabilities"}:
            raise ConfigError("measure: bernoulli takes only 'probabilities'")
        probs = body.get("probabilities")
        if not isinstance(probs, list) or len(probs) != spec.alphabet_size:
            raise ConfigError(f"measure.probabilities: expected {spec.alphabet_size} numbers")
        m = MarkovMeasure.bernoulli([float(p) for p in probs])
        if not np.array_equal(m.spec.transitions, spec.transitions):
            raise ConfigError("measure: a Bernoulli measure needs the full shift")
        return m
    if kind == "markov":
        if set(body) - {"type", "stochastic"}:
            raise ConfigError("measure: markov takes only 'stochastic'")
        if "stochastic" not in body:
            raise ConfigError("measure.stochastic is required")
        P = np.array(body["stochastic"], dtype=float)
        if P.shape != (spec.alphabet_size, spec.alphabet_size):
            raise ConfigError(f"measure.stochastic: expected shape {(spec.alphabet_size,) * 2}, got {P.shape}")
        try:
            return MarkovMeasure.from_stochastic(spec, P)
        except ValidationError as exc:
            raise ConfigError(f"measure.stochastic: {exc}") from exc
    raise ConfigError(f"measure.type must be 'bernoulli' or 'markov', got {kind!r}")


def _build_experiment(body: dict) -> dict[str, Any]:
    e = dict(EXPERIMENT_DEFAULTS)
    e.update(body)
    for key in INT_KEYS:
        v = e[key]
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(f"experiment.{key} must be an integer, got {v!r}")
    for key in ("grouping_gap", "intersect_tol", "weak_star_weight", "exponent_weight"):
        v = e[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ConfigError(f"experiment.{key} must be a number, got {v!r}")
        e[key] = float(v)
    if not isinstance(e["epsilons"], list) or not e["epsilons"]:
        raise ConfigError("experiment.epsilons must be a nonempty list")
    e["epsilons"] = [float(v) for v in e["epsilons"]]
    for key in ("horizon", "samples", "weak_star_depth", "n_min", "n_max", "enumeration_cap"):
        if e[key] < 1:
            raise ConfigError(f"experiment.{key} must be positive")
    if e["n_min"] > e["n_max"]:
        raise ConfigError("experiment.n_min must not exceed experiment.n_max")
    for key in ("grouping_gap", "intersect_tol"):
        if e[key] <= 0:
            raise ConfigError(f"experiment.{key} must be positive")
    if min(e["epsilons"]) <= 0:
        raise ConfigError("experiment.epsilons must be positive")
    return e


def _build_output(body: dict) -> dict[str, Any]:
    out = dict(OUTPUT_DEFAULTS)
    out.update(body)
    formats = out["formats"]
    if not isinstance(formats, list) or not set(formats) <= {"json", "csv"}:
        raise ConfigError("output.formats must be a list drawn from 'json', 'csv'")
    if not isinstance(out["directory"], str) or not isinstance(out["prefix"], str):
        raise ConfigError("output.directory and output.prefix must be strings")
    return out


def _build(raw: dict, source: str, overrides: list[str]) -> RunConfig:
    _check_keys(raw)
    for section in ("subshift", "generator"):
        if section not in raw:
            raise ConfigError(f"missing [{section}] section")
    spec = _build_spec(raw["subshift"])
    gen = _build_generator(raw["generator"], spec)
    measure = _build_measure(raw["measure"], spec) if "measure" in raw else None
    return RunConfig(
        spec=spec,
        gen=gen,
        measure=measure,
        experiment=_build_experiment(raw.get("experiment", {})),
        output=_build_output(raw.get("output", {})),
        source=source,
        overrides=overrides,
    )
