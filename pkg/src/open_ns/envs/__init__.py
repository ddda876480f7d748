"""Non-stationary benchmark domains."""
from __future__ import annotations

import re

from ..policies import Policy, PolicyError, PresetPolicy, epsilon_mixture, uniform
from . import medevac, mountain_car, robotoy  # noqa: F401  (registers domains)
from .base import (
    DomainId,
    EnvConfig,
    EnvError,
    EnvState,
    EpisodeHistory,
    SnapshotError,
    describe,
    env_create,
    restore,
    run_episode,
    snapshot,
)

_PRESET_RE = re.compile(r"^\s*([A-Za-z_][\w]*)\s*(?:\((.*)\))?\s*$")


def make_policy(preset_id: str, config: EnvConfig) -> Policy:
    """Resolve a preset id such as ``robotoy_run_heavy(0.8)`` for ``config``'s domain.

    ``uniform`` and ``mix(<preset>, w)`` are available for every domain.
    """
    m = _PRESET_RE.match(preset_id)
    if not m:
        raise PolicyError(f"malformed preset id {preset_id!r}")
    name, arg = m.group(1), (m.group(2) or "").strip()
    dom = describe(config)
    if name == "uniform":
        inner: Policy = uniform(dom.n_observations, dom.n_actions)
    elif name == "mix":
        base, _, w = arg.rpartition(",")
        if not base:
            raise PolicyError(f"mix preset needs '(preset, weight)', got {preset_id!r}")
        inner = epsilon_mixture(make_policy(base, config), float(w))
    else:
        table = dom.presets()
        if name not in table:
            raise PolicyError(
                f"unknown preset {name!r} for {config.domain_id.value}; known: {sorted(table)}"
            )
        args = [a.strip() for a in arg.split(",")] if arg else []
        inner = table[name](*args)
    return PresetPolicy(preset_id.strip(), inner)


def default_policies(config: EnvConfig) -> tuple[str, str]:
    return describe(config).default_policies()


__all__ = [
    "DomainId",
    "EnvConfig",
    "EnvError",
    "EnvState",
    "EpisodeHistory",
    "SnapshotError",
    "default_policies",
    "describe",
    "env_create",
    "make_policy",
    "restore",
    "run_episode",
    "snapshot",
]
