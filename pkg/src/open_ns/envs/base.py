"""Episodic non-stationary decision processes.

A process is a sequence of POMDPs M_1, M_2, ...  Each domain owns a latent
vector describing the current M_i; after every episode a meta-transition maps
(latent, episode index, interaction summary) to the next latent.  Everything
inside an episode is driven by a single episode generator so trajectories are
pure functions of (config, state, policy, seed).
"""
from __future__ import annotations

import dataclasses
import enum
import json
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Mapping

import numpy as np

from ..policies import Policy

SNAPSHOT_MAGIC = b"ONSE"
SNAPSHOT_VERSION = 1


class EnvError(ValueError):
    """Invalid environment configuration or state."""


class SnapshotError(EnvError):
    """Snapshot bytes could not be decoded."""


class DomainId(str, enum.Enum):
    ROBOTOY_ACTIVE = "RoboToyActive"
    ROBOTOY_PASSIVE = "RoboToyPassive"
    NS_MOUNTAIN_CAR = "NsMountainCar"
    MEDEVAC = "Medevac"


@dataclass(frozen=True)
class EnvConfig:
    domain_id: DomainId
    speed: float = 0.0
    seed: int = 0
    horizon_cap: int | None = None  # None -> domain default
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "domain_id", DomainId(self.domain_id))
        except ValueError:
            raise EnvError(f"unknown domain_id {self.domain_id!r}") from None
        if not np.isfinite(self.speed) or self.speed < 0:
            raise EnvError(f"speed must be a non-negative real, got {self.speed}")
        if not 0 <= int(self.seed) < 2**64:
            raise EnvError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.horizon_cap is not None and int(self.horizon_cap) < 1:
            raise EnvError(f"horizon_cap must be >= 1, got {self.horizon_cap}")
        object.__setattr__(self, "speed", float(self.speed))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "params", dict(self.params))

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain_id": self.domain_id.value,
            "speed": self.speed,
            "seed": self.seed,
            "horizon_cap": self.horizon_cap,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EnvConfig":
        return cls(d["domain_id"], d["speed"], d["seed"], d.get("horizon_cap"), d.get("params", {}))


@dataclass(frozen=True, eq=False)
class EpisodeHistory:
    """One episode: observations, actions, rewards and logged behaviour probabilities."""

    episode_index: int
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_probs: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def ret(self) -> float:
        return float(np.sum(self.rewards))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EpisodeHistory):
            return NotImplemented
        return self.episode_index == other.episode_index and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("observations", "actions", "rewards", "behavior_probs")
        )


@dataclass(frozen=True, eq=False)
class EnvState:
    config: EnvConfig
    episode_index: int
    latent: np.ndarray
    rng_state: Mapping[str, Any]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EnvState):
            return NotImplemented
        return (
            self.config == other.config
            and self.episode_index == other.episode_index
            and np.array_equal(self.latent, other.latent)
            and _canonical(self.rng_state) == _canonical(other.rng_state)
        )


@dataclass
class EpisodeTrace:
    """What a domain returns from playing one episode."""

    observations: list[int]
    actions: list[int]
    rewards: list[float]
    behavior_probs: list[float]
    summary: dict[str, Any]


class Domain:
    """A benchmark domain: per-episode dynamics plus a meta-transition on its latent."""

    domain_id: ClassVar[DomainId]
    params_cls: ClassVar[type]
    default_horizon: ClassVar[int]
    active: ClassVar[bool]

    def __init__(self, config: EnvConfig):
        names = {f.name for f in dataclasses.fields(self.params_cls)}
        unknown = set(config.params) - names
        if unknown:
            raise EnvError(f"{config.domain_id.value}: unknown params {sorted(unknown)}")
        self.config = config
        self.params = self.params_cls(**config.params)
        self.speed = config.speed
        self.horizon = int(config.horizon_cap or self.default_horizon)

    n_observations: int
    n_actions: int
    r_max: float

    def initial_latent(self) -> np.ndarray:
        raise NotImplementedError

    def play(self, latent: np.ndarray, episode_index: int, policy: Policy,
             rng: np.random.Generator) -> EpisodeTrace:
        raise NotImplementedError

    def meta_transition(self, latent: np.ndarray, episode_index: int,
                        summary: Mapping[str, Any]) -> np.ndarray:
        raise NotImplementedError

    def presets(self) -> dict[str, Callable[..., Policy]]:
        return {}

    def default_policies(self) -> tuple[str, str]:
        """(evaluation preset, behaviour preset)."""
        raise NotImplementedError


_REGISTRY: dict[DomainId, type[Domain]] = {}


def register(cls: type[Domain]) -> type[Domain]:
    _REGISTRY[cls.domain_id] = cls
    return cls


def domain_for(config: EnvConfig) -> Domain:
    try:
        cls = _REGISTRY[config.domain_id]
    except KeyError:
        raise EnvError(f"unknown domain_id {config.domain_id!r}") from None
    return cls(config)


# Domain objects are stateless given their config, so cache them.
_DOMAIN_CACHE: dict[str, Domain] = {}


def _domain(config: EnvConfig) -> Domain:
    key = json.dumps(config.to_dict(), sort_keys=True)
    dom = _DOMAIN_CACHE.get(key)
    if dom is None:
        if len(_DOMAIN_CACHE) > 256:
            _DOMAIN_CACHE.clear()
        dom = _DOMAIN_CACHE[key] = domain_for(config)
    return dom


def env_create(config: EnvConfig) -> EnvState:
    dom = _domain(config)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    latent = np.array(dom.initial_latent(), dtype=float)
    latent.setflags(write=False)
    return EnvState(config, 0, latent, rng.bit_generator.state)


def _episode_rng(state: EnvState, seed: Any) -> tuple[np.random.Generator, Mapping[str, Any]]:
    if seed is None:
        bg = np.random.PCG64()
        bg.state = dict(state.rng_state)
        sub = int(np.random.Generator(bg).integers(0, 2**63))
        return np.random.default_rng(sub), bg.state
    if isinstance(seed, np.random.Generator):
        return seed, state.rng_state
    return np.random.default_rng(seed), state.rng_state


def run_episode(state: EnvState, policy: Policy, seed: Any = None) -> tuple[EpisodeHistory, EnvState]:
    """Play one episode of M_i under ``policy`` and apply the meta-transition once.

    ``seed`` (int, SeedSequence or Generator) drives all randomness inside the
    episode.  When omitted, a sub-seed is drawn from the state's own generator,
    which is then advanced.
    """
    dom = _domain(state.config)
    if (policy.n_observations, policy.n_actions) != (dom.n_observations, dom.n_actions):
        raise EnvError(
            f"policy {policy.name!r} has shape {(policy.n_observations, policy.n_actions)}, "
            f"domain {dom.domain_id.value} needs {(dom.n_observations, dom.n_actions)}"
        )
    rng, rng_state = _episode_rng(state, seed)
    trace = dom.play(state.latent, state.episode_index, policy, rng)
    if any(p <= 0.0 for p in trace.behavior_probs):
        raise EnvError("policy produced an action it assigns zero probability")
    history = EpisodeHistory(
        state.episode_index,
        np.asarray(trace.observations, dtype=np.int64),
        np.asarray(trace.actions, dtype=np.int64),
        np.asarray(trace.rewards, dtype=float),
        np.asarray(trace.behavior_probs, dtype=float),
    )
    latent = np.array(dom.meta_transition(state.latent, state.episode_index, trace.summary), dtype=float)
    latent.setflags(write=False)
    return history, EnvState(state.config, state.episode_index + 1, latent, rng_state)


def describe(config: EnvConfig) -> Domain:
    """Domain object for ``config`` (spaces, R_max, presets, resolved params)."""
    return _domain(config)


# ---------------------------------------------------------------- snapshots

def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, default=int)


def snapshot(state: EnvState) -> bytes:
    header = {
        "domain_id": state.config.domain_id.value,
        "config": state.config.to_dict(),
        "episode_index": state.episode_index,
        "rng_state": state.rng_state,
        "latent_len": int(state.latent.size),
    }
    hdr = _canonical(header).encode()
    latent = np.ascontiguousarray(state.latent, dtype="<f8").tobytes()
    return SNAPSHOT_MAGIC + struct.pack("<HI", SNAPSHOT_VERSION, len(hdr)) + hdr + latent


def restore(blob: bytes) -> EnvState:
    if not isinstance(blob, (bytes, bytearray)) or blob[:4] != SNAPSHOT_MAGIC:
        raise SnapshotError("not an environment snapshot (bad magic)")
    try:
        version, hlen = struct.unpack_from("<HI", blob, 4)
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        start = 4 + struct.calcsize("<HI")
        header = json.loads(bytes(blob[start:start + hlen]).decode())
        body = bytes(blob[start + hlen:])
        n = int(header["latent_len"])
        if len(body) != 8 * n:
            raise SnapshotError(f"latent payload has {len(body)} bytes, expected {8 * n}")
        latent = np.frombuffer(body, dtype="<f8").astype(float)
        config = EnvConfig.from_dict(header["config"])
        if config.domain_id.value != header["domain_id"]:
            raise SnapshotError("domain_id mismatch inside snapshot")
        _domain(config)
    except SnapshotError:
        raise
    except (KeyError, ValueError, TypeError, struct.error, UnicodeDecodeError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc}") from None
    latent.setflags(write=False)
    return EnvState(config, int(header["episode_index"]), latent, header["rng_state"])
