"""Model parameters, coupling functions and coarse wave variables.

The network couples leaky integrate-and-fire units through a difference of
exponentials in space and an exponentially decaying synaptic current in
time:

    w(x) = a1*exp(-b1*|x|) - a2*exp(-b2*|x|)
    alpha(t) = beta*exp(-beta*t)*H(t)

A travelling wave advecting m spikes is fully described by its coarse
variables: a speed ``c`` and a vector ``T`` of m firing offsets with
``T[0] == 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "Stimulus",
    "Domain",
    "ModelParams",
    "CoarseWave",
    "ProfileSample",
    "kernel_w",
    "alpha",
    "load_config",
    "save_config",
]


@dataclass(frozen=True)
class Stimulus:
    """Transient localized drive: I + d1/cosh(d2*x) while t < tau_ext."""

    d1: float = 0.0
    d2: float = 10.0
    tau_ext: float = 2.0


@dataclass(frozen=True)
class Domain:
    """Ring of circumference 2L discretized by n evenly spaced neurons."""

    L: float = 3.0
    n: int = 1000


@dataclass(frozen=True)
class ModelParams:
    """All scalar model parameters, with nominal defaults.

    ``eta`` bounds the exponential weight of the stability strip; it must
    satisfy 0 < eta < min(b1, b2) so the kernel stays integrable against
    exp(eta*|x|). When not given it defaults to min(b1, b2) - 0.1.
    """

    beta: float = 4.5
    a1: float = 11.0
    a2: float = 7.0
    b1: float = 5.0
    b2: float = 3.5
    I: float = 0.9
    eta: float | None = None
    stimulus: Stimulus = field(default_factory=Stimulus)
    domain: Domain = field(default_factory=Domain)

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.b1 <= 0 or self.b2 <= 0:
            raise ConfigError("kernel decay rates b1, b2 must be positive")
        if self.a1 < 0 or self.a2 < 0:
            raise ConfigError("kernel amplitudes a1, a2 must be non-negative")
        if self.domain.n < 1 or self.domain.L <= 0:
            raise ConfigError("domain requires n >= 1 and L > 0")
        if self.eta is None:
            object.__setattr__(self, "eta", min(self.b1, self.b2) - 0.1)
        if not (0 < self.eta < min(self.b1, self.b2)):
            raise ConfigError("eta must lie in (0, min(b1, b2))")

    @property
    def kernel_terms(self):
        """Kernel as ((amplitude, rate), ...) including the inhibitory sign."""
        return ((self.a1, self.b1), (-self.a2, self.b2))

    def with_(self, **overrides) -> "ModelParams":
        return replace(self, **overrides)

    def to_dict(self) -> dict:
        return {
            "model": {
                "beta": self.beta,
                "a1": self.a1,
                "a2": self.a2,
                "b1": self.b1,
                "b2": self.b2,
                "I": self.I,
                "eta": self.eta,
            },
            "stimulus": {
                "d1": self.stimulus.d1,
                "d2": self.stimulus.d2,
                "tau_ext": self.stimulus.tau_ext,
            },
            "domain": {"L": self.domain.L, "n": self.domain.n},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        model = dict(data.get("model", {}))
        stim = dict(data.get("stimulus", {}))
        dom = dict(data.get("domain", {}))
        known_model = {"beta", "a1", "a2", "b1", "b2", "I", "eta"}
        bad = set(model) - known_model
        if bad:
            raise ConfigError(f"unknown model keys: {sorted(bad)}")
        try:
            return cls(
                **model,
                stimulus=Stimulus(**stim),
                domain=Domain(**dom),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class CoarseWave:
    """Coarse variables (c, T) of an m-spike travelling wave.

    Invariants: T[0] == 0, T strictly increasing, c > 0.
    """

    m: int
    c: float
    T: np.ndarray

    def __post_init__(self):
        T = np.atleast_1d(np.asarray(self.T, dtype=float)).copy()
        T.setflags(write=False)
        object.__setattr__(self, "T", T)
        if self.m != T.size:
            raise ValueError(f"m={self.m} does not match len(T)={T.size}")
        if self.c <= 0:
            raise ValueError("wave speed must be positive")
        if abs(T[0]) > 0:
            raise ValueError("phase condition violated: T[0] must be 0")
        if np.any(np.diff(T) <= 0):
            raise ValueError("firing offsets must be strictly increasing")

    @classmethod
    def from_offsets(cls, c: float, T) -> "CoarseWave":
        T = np.atleast_1d(np.asarray(T, dtype=float))
        return cls(m=T.size, c=float(c), T=T)

    def to_dict(self) -> dict:
        return {"m": self.m, "c": self.c, "T": self.T.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CoarseWave":
        return cls(m=int(data["m"]), c=float(data["c"]), T=np.asarray(data["T"], dtype=float))


@dataclass(frozen=True)
class ProfileSample:
    """One point of the comoving profile: voltage and synaptic values at xi."""

    xi: float
    nu: float
    sigma: float


def kernel_w(x, p: ModelParams):
    """Connectivity kernel a1*exp(-b1|x|) - a2*exp(-b2|x|); even in x."""
    ax = np.abs(x)
    return p.a1 * np.exp(-p.b1 * ax) - p.a2 * np.exp(-p.b2 * ax)


def alpha(t, p: ModelParams):
    """Post-synaptic current beta*exp(-beta*t) gated to t >= 0."""
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, p.beta * np.exp(-p.beta * np.maximum(t, 0.0)), 0.0)


def load_config(path) -> tuple[ModelParams, dict]:
    """Read params plus a free-form ``numerics`` section from a JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    params = ModelParams.from_dict(data)
    return params, dict(data.get("numerics", {}))


def save_config(path, p: ModelParams, numerics: dict | None = None):
    data = p.to_dict()
    if numerics:
        data["numerics"] = numerics
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
