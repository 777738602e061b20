"""From geometry to pseudoranges: visibility, multipath offset, OU noise."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from canyonsim.constants import DEFAULT_ELEVATION_MASK, DEFAULT_MAX_RANGE, SPEED_OF_LIGHT
from canyonsim.raycast import RayPairResult, cast_satellite_rays


class Visibility(str, enum.Enum):
    LOS_CLEAR = "LOS_CLEAR"
    MULTIPATH = "MULTIPATH"
    BLOCKED = "BLOCKED"
    BELOW_MASK = "BELOW_MASK"

    @property
    def usable(self) -> bool:
        return self in (Visibility.LOS_CLEAR, Visibility.MULTIPATH)


@dataclass(frozen=True)
class OUNoiseConfig:
    """Ornstein-Uhlenbeck parameters: dx = theta (mu - x) dt + sigma dW."""

    theta: float = 0.1
    mu: float = 0.0
    sigma: float = 0.5
    dt: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.theta < 0 or self.sigma < 0:
            raise ValueError("theta and sigma must be non-negative")


@dataclass
class OUNoiseState:
    x: float
    rng: np.random.Generator = field(repr=False)


@dataclass(frozen=True)
class ReceiverConfig:
    elevation_mask: float = DEFAULT_ELEVATION_MASK
    max_range: float = DEFAULT_MAX_RANGE
    clock_bias: float = 0.0  # seconds
    noise: OUNoiseConfig = OUNoiseConfig()
    noise_enabled: bool = True
    pseudorange_sigma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.elevation_mask < math.pi / 2:
            raise ValueError("elevation mask must lie in [0, pi/2)")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")


@dataclass(frozen=True)
class PseudorangeMeasurement:
    prn: int
    sat_position: np.ndarray
    true_range: float
    multipath_offset: float
    noise: float
    clock_term: float
    pseudorange: Optional[float]
    visibility: Visibility
    rays: Optional[RayPairResult] = None


def classify_visibility(pair: RayPairResult, max_range: Optional[float] = None) -> Visibility:
    """Line of sight clear, reflected only, or lost (no reflector behind)."""
    limit = pair.max_range if max_range is None else max_range
    if not pair.r_los < limit:
        return Visibility.LOS_CLEAR
    if pair.r_ref < limit:
        return Visibility.MULTIPATH
    return Visibility.BLOCKED


def multipath_offset(r_ref: float, theta: float) -> float:
    """Extra path of a single normal-incidence reflection: d (1 + sin(pi/2 - 2 theta)).

    ``r_ref`` is the mirror-ray range, standing in for the pre-reflection
    distance d; ``theta`` is the satellite elevation. A receiver standing on
    the reflecting wall (``r_ref == 0``) gets no offset.
    """
    if not r_ref >= 0:
        raise ValueError("r_ref must be non-negative")
    if not 0.0 <= theta <= math.pi / 2:
        raise ValueError("theta must lie in [0, pi/2]")
    return r_ref * (1.0 + math.sin(math.pi / 2 - 2.0 * theta))


def ou_seed_sequence(seed, prn: int) -> np.random.SeedSequence:
    """Per-PRN stream derived from a master seed (an int or a tuple of ints)."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.SeedSequence(entropy + [int(prn)])


def ou_initial_state(config: OUNoiseConfig, prn: int, seed=None) -> OUNoiseState:
    ss = ou_seed_sequence(config.seed if seed is None else seed, prn)
    return OUNoiseState(config.mu, np.random.Generator(np.random.PCG64(ss)))


def ou_step(state: OUNoiseState, config: OUNoiseConfig) -> OUNoiseState:
    """Exact conditional-Gaussian transition of the OU process over ``config.dt``."""
    z = state.rng.standard_normal()
    th, dt = config.theta, config.dt
    if th == 0.0:
        x = state.x + config.sigma * math.sqrt(dt) * z
    else:
        decay = math.exp(-th * dt)
        scale = config.sigma * math.sqrt(-math.expm1(-2.0 * th * dt) / (2.0 * th))
        x = config.mu + (state.x - config.mu) * decay + scale * z
    return OUNoiseState(x, state.rng)


def generate_pseudorange(rho: float, m: float, delta_t: float, e: float) -> float:
    if not rho > 0:
        raise ValueError("true range must be positive")
    return rho + m + SPEED_OF_LIGHT * delta_t + e


def epoch_measurements(caster, sats, receiver_truth, cfg: ReceiverConfig,
                       noise_states: Mapping[int, OUNoiseState]) -> list[PseudorangeMeasurement]:
    """Measurements for one epoch; ``noise_states`` is advanced in place.

    Every channel's noise advances each epoch, visible or not, so a PRN's
    noise sequence depends only on time and its seed.
    """
    rx = np.asarray(receiver_truth, dtype=float)
    clock_term = SPEED_OF_LIGHT * cfg.clock_bias
    out = []
    for sat in sats:
        if sat.prn not in noise_states:
            raise KeyError(f"no noise state for PRN {sat.prn}")
        state = ou_step(noise_states[sat.prn], cfg.noise)
        noise_states[sat.prn] = state
        e = state.x if cfg.noise_enabled else 0.0
        rho = float(np.linalg.norm(sat.position_local - rx))

        rays = None
        m = 0.0
        if sat.elevation <= cfg.elevation_mask:
            vis = Visibility.BELOW_MASK
        else:
            rays = cast_satellite_rays(caster, rx, sat.azimuth, min(sat.elevation, math.pi / 2),
                                       cfg.max_range)
            vis = classify_visibility(rays)
            if vis is Visibility.MULTIPATH:
                m = multipath_offset(rays.r_ref, sat.elevation)
        p = generate_pseudorange(rho, m, cfg.clock_bias, e) if vis.usable else None
        out.append(PseudorangeMeasurement(
            prn=sat.prn,
            sat_position=np.asarray(sat.position_local, dtype=float),
            true_range=rho,
            multipath_offset=m,
            noise=e,
            clock_term=clock_term,
            pseudorange=p,
            visibility=vis,
            rays=rays,
        ))
    return out
