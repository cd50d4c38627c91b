"""Simulated decision maker.

Turns a true-utility gap into a stochastic pairwise preference under a
configurable noise model. A decision is +1 when the first output is
preferred, -1 when the second is. The live-human session service bypasses
this module entirely and records responses (including ties) as they arrive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from bope.errors import ConfigError

NOISELESS = "noiseless"
GAUSSIAN = "gaussian"
BRADLEY_TERRY = "bradley-terry"
HUMAN = "human"

_MODELS = (NOISELESS, GAUSSIAN, BRADLEY_TERRY, HUMAN)


@dataclass(frozen=True)
class DmConfig:
    model: str = GAUSSIAN
    noise_sd: float = 0.1  # Gaussian utility-noise standard deviation
    bt_beta: float = 1.0  # Bradley-Terry scale

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ConfigError(f"dm.model must be one of {_MODELS}, got {self.model!r}")
        if self.noise_sd < 0:
            raise ConfigError(f"dm.noise_sd must be >= 0, got {self.noise_sd}")
        if self.bt_beta <= 0:
            raise ConfigError(f"dm.bt_beta must be > 0, got {self.bt_beta}")

    def to_dict(self) -> dict:
        return {"model": self.model, "noise_sd": self.noise_sd, "bt_beta": self.bt_beta}

    @classmethod
    def from_dict(cls, d: dict) -> "DmConfig":
        return cls(**d)


@dataclass(frozen=True)
class PreferenceResponse:
    label: int  # +1 first output preferred, -1 second
    utility_gap_true: float
    was_error: bool  # label contradicts the sign of the true gap

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "utility_gap_true": self.utility_gap_true,
            "was_error": self.was_error,
        }


def preference_probability(delta: float, cfg: DmConfig):
    """P(first preferred) given true utility gap delta = g(y1) - g(y2).

    Gaussian noise: Phi(delta / sd), degenerating to a step function at
    sd = 0. Bradley-Terry: logistic(beta * delta). Accepts arrays.
    """
    delta = np.asarray(delta, dtype=float)
    if cfg.model == BRADLEY_TERRY:
        p = expit(cfg.bt_beta * delta)
    elif cfg.model in (GAUSSIAN, NOISELESS):
        sd = cfg.noise_sd if cfg.model == GAUSSIAN else 0.0
        if sd == 0:
            # Exact ties resolve to the first output (probability 1).
            p = np.where(delta >= 0, 1.0, 0.0)
        else:
            p = ndtr(delta / sd)
    else:
        raise ConfigError(f"no preference probability for dm.model={cfg.model!r}")
    return p if p.ndim else float(p)


def respond(g1: float, g2: float, cfg: DmConfig, rng: np.random.Generator) -> PreferenceResponse:
    """Sample the decision maker's answer for true utilities g1, g2."""
    delta = float(g1) - float(g2)
    if cfg.model == NOISELESS or (cfg.model == GAUSSIAN and cfg.noise_sd == 0):
        label = 1 if delta >= 0 else -1  # exact tie resolved to +1
    elif cfg.model == GAUSSIAN:
        label = 1 if delta + cfg.noise_sd * rng.standard_normal() > 0 else -1
    elif cfg.model == BRADLEY_TERRY:
        label = 1 if rng.random() < expit(cfg.bt_beta * delta) else -1
    else:
        raise ConfigError(f"simulated responses unavailable for dm.model={cfg.model!r}")
    was_error = (delta > 0 and label == -1) or (delta < 0 and label == 1)
    return PreferenceResponse(label=label, utility_gap_true=delta, was_error=was_error)
