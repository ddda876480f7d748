"""TOML experiment files and dotted ``key=value`` overrides.

Schema (every key optional; unspecified keys come from the profile)::

    profile = "desk"                     # or "paper"
    domains = ["RoboToyActive", "NsMountainCar"]
    speeds = [0, 1, 2, 3]
    n_episodes = 1000
    L = 100
    n_trials = 20
    n_future_clones = 20
    algorithms = ["OPEN", "ProWLS", "WIS", "SWIS"]   # NaiveAR is also available
    pi_preset = ""                       # empty: domain default
    beta_preset = ""
    horizon_cap = 30
    base_seed = 0

    [algo]
    open_p = 200
    prowls_d = 5
    swis_window = 200
    naive_p = 1
    open_ridge = 0.0025

    [domain_params.RoboToyActive]
    alpha0 = 0.0005

Overrides use the same dotted paths, e.g. ``algo.open_p=100`` or
``domain_params.NsMountainCar.c_v=0.01``; values are parsed as TOML values
and fall back to bare strings.
"""
from __future__ import annotations

import dataclasses
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .envs import DomainId, EnvConfig, describe
from .forecast import AlgoParams
from .harness import PROFILES, ConfigError, ExperimentConfig

TOP_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"algo", "domain_params"}
ALGO_KEYS = {f.name for f in dataclasses.fields(AlgoParams)}


def parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _domain_param_names(domain: str) -> set[str]:
    try:
        dom = describe(EnvConfig(DomainId(domain)))
    except ValueError as exc:
        raise ConfigError(f"unknown domain {domain!r} in domain_params") from None
    return {f.name for f in dataclasses.fields(dom.params_cls)}


def _set(tree: dict[str, Any], path: str, value: Any) -> None:
    parts = path.split(".")
    head = parts[0]
    if head == "profile" and len(parts) == 1:
        tree["profile"] = value
    elif head in TOP_KEYS and len(parts) == 1:
        tree[head] = value
    elif head == "algo" and len(parts) == 2 and parts[1] in ALGO_KEYS:
        tree.setdefault("algo", {})[parts[1]] = value
    elif head == "domain_params" and len(parts) == 3:
        if parts[2] not in _domain_param_names(parts[1]):
            raise ConfigError(f"unknown key {path!r}: {parts[1]} has no parameter {parts[2]!r}")
        tree.setdefault("domain_params", {}).setdefault(parts[1], {})[parts[2]] = value
    else:
        raise ConfigError(f"unknown configuration key {path!r}")


def _flatten(prefix: str, node: Mapping[str, Any], out: list[tuple[str, Any]]) -> None:
    for k, v in node.items():
        path = f"{prefix}.{k}" if prefix else k
        if isinstance(v, Mapping):
            _flatten(path, v, out)
        else:
            out.append((path, v))


def parse_overrides(items: Sequence[str]) -> list[tuple[str, Any]]:
    out = []
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        out.append((key.strip(), parse_value(value.strip())))
    return out


def build_config(path: str | Path | None = None, *, profile: str | None = None,
                 overrides: Sequence[str] = (), seed: int | None = None) -> ExperimentConfig:
    """Profile defaults, then the file, then ``overrides``, then ``seed``.

    Every key is checked against the schema before anything runs.
    """
    tree: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        pairs: list[tuple[str, Any]] = []
        _flatten("", doc, pairs)
        for key, value in pairs:
            _set(tree, key, value)
    for key, value in parse_overrides(overrides):
        _set(tree, key, value)
    if seed is not None:
        tree["base_seed"] = seed
    name = profile or tree.pop("profile", None) or "desk"
    tree.pop("profile", None)
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    for key in ("domains", "speeds", "algorithms"):
        if key in tree and not isinstance(tree[key], list):
            tree[key] = [tree[key]]
    try:
        return ExperimentConfig.from_profile(name, **tree)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
