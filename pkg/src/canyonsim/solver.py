"""Iterative least-squares position fix and dilution-of-precision analysis."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from canyonsim.constants import SPEED_OF_LIGHT
from canyonsim.geodesy import GeodeticOrigin


class SolverError(RuntimeError):
    pass


class InsufficientSatellites(SolverError):
    pass


class SingularGeometry(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-6
    max_iterations: int = 20

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class SolverWorkspace:
    """Last linear subproblem: minimise ||A dx - dP||."""

    A: np.ndarray
    delta_P: np.ndarray
    delta_x: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def D(self) -> np.ndarray:
        return np.linalg.inv(self.A.T @ self.A)

    def Q(self, sigma: float) -> np.ndarray:
        return self.D * sigma * sigma


@dataclass(frozen=True)
class FixSolution:
    position: np.ndarray
    clock_bias: float  # seconds
    iterations: int
    converged: bool
    residual_norm: float
    workspace: SolverWorkspace


class DopRating(str, enum.Enum):
    IDEAL = "Ideal"
    EXCELLENT = "Excellent"
    GOOD = "Good"
    MODERATE = "Moderate"
    FAIR = "Fair"
    POOR = "Poor"


_DOP_BINS = (
    (1.0, DopRating.IDEAL),
    (2.0, DopRating.EXCELLENT),
    (5.0, DopRating.GOOD),
    (10.0, DopRating.MODERATE),
    (20.0, DopRating.FAIR),
)


@dataclass(frozen=True)
class DopComponents:
    gdop: float
    pdop: float
    hdop: float
    vdop: float
    tdop: float
    sigma: float
    rating: DopRating
    D: np.ndarray

    @property
    def sigma_g(self) -> float:
        """Expected rms error of the full (x, y, z, clock) solution in metres."""
        return self.gdop * self.sigma

    def as_list(self) -> list[float]:
        return [self.gdop, self.pdop, self.hdop, self.vdop, self.tdop]


def classify_dop(value: float) -> DopRating:
    """Rating bins with inclusive lower and exclusive upper bounds."""
    if not value >= 0:
        raise ValueError(f"DOP must be non-negative, got {value}")
    for upper, rating in _DOP_BINS:
        if value < upper:
            return rating
    return DopRating.POOR


def geometry_matrix(sat_positions, receiver) -> np.ndarray:
    """Rows ((sat - rx) / rho, -1): the negated Jacobian of pseudorange w.r.t. (x, y, z, c dt)."""
    sats = np.asarray(sat_positions, dtype=float).reshape(-1, 3)
    diff = sats - np.asarray(receiver, dtype=float)
    rho = np.linalg.norm(diff, axis=1)
    if np.any(rho == 0):
        raise SingularGeometry("receiver coincides with a satellite")
    A = np.empty((len(sats), 4))
    A[:, :3] = diff / rho[:, None]
    A[:, 3] = -1.0
    return A


def _check_rank(A: np.ndarray) -> None:
    if A.shape[0] < 4 or np.linalg.matrix_rank(A) < 4:
        raise SingularGeometry("geometry matrix is rank deficient")


def _lstsq_qr(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(A)
    return np.linalg.solve(r, q.T @ b)


def solve_position(sat_positions, pseudoranges: Sequence[float], initial_position,
                   initial_clock: float = 0.0, cfg: SolverConfig = SolverConfig()) -> FixSolution:
    """Gauss-Newton fix of (x, y, z, clock bias) from pseudoranges.

    Each iteration linearises the pseudorange model at the current estimate,
    forms ``dP`` = measured - modelled and solves ``min ||A dx - dP||`` by QR.
    Because ``A`` is the negated Jacobian the estimate moves by ``-dx``. The
    clock is carried in metres internally and reported in seconds.

    Raises
    ------
    InsufficientSatellites
        Fewer than four pseudoranges.
    SingularGeometry
        The geometry matrix has rank below four.
    """
    sats = np.asarray(sat_positions, dtype=float).reshape(-1, 3)
    P = np.asarray(pseudoranges, dtype=float)
    if len(P) != len(sats):
        raise ValueError("one pseudorange per satellite is required")
    if len(P) < 4:
        raise InsufficientSatellites(f"{len(P)} usable measurements, at least 4 required")

    x = np.asarray(initial_position, dtype=float).copy()
    b = SPEED_OF_LIGHT * float(initial_clock)
    converged = False
    iterations = 0
    A = dP = dx = None
    for iterations in range(1, cfg.max_iterations + 1):
        A = geometry_matrix(sats, x)
        _check_rank(A)
        rho = np.linalg.norm(sats - x, axis=1)
        dP = P - (rho + b)
        dx = _lstsq_qr(A, dP)
        x = x - dx[:3]
        b = b - dx[3]
        if float(np.linalg.norm(dx)) < cfg.epsilon:
            converged = True
            break

    residual = P - (np.linalg.norm(sats - x, axis=1) + b)
    return FixSolution(
        position=x,
        clock_bias=b / SPEED_OF_LIGHT,
        iterations=iterations,
        converged=converged,
        residual_norm=float(np.linalg.norm(residual)),
        workspace=SolverWorkspace(A, dP, dx),
    )


def solve_measurements(measurements, initial_position, initial_clock: float = 0.0,
                       cfg: SolverConfig = SolverConfig()) -> FixSolution:
    """:func:`solve_position` over the usable entries of a measurement list."""
    usable = [m for m in measurements if m.visibility.usable]
    if len(usable) < 4:
        raise InsufficientSatellites(f"{len(usable)} usable measurements, at least 4 required")
    return solve_position([m.sat_position for m in usable], [m.pseudorange for m in usable],
                          initial_position, initial_clock, cfg)


def compute_dop(sat_positions, receiver, sigma: float = 1.0,
                frame_origin: Optional[GeodeticOrigin] = None) -> DopComponents:
    """DOP components from the satellite geometry at ``receiver``.

    Positions are taken to be in a local ENU frame. Pass ``frame_origin`` when
    they are ECEF instead; the position block of D is then rotated into the
    ENU frame at that origin before horizontal/vertical terms are read off.
    """
    A = geometry_matrix(sat_positions, receiver)
    _check_rank(A)
    D = np.linalg.inv(A.T @ A)
    P = D[:3, :3]
    if frame_origin is not None:
        R = frame_origin.rotation
        P = R @ P @ R.T
    # clip guards against -0.0 style round-off on near-degenerate diagonals
    ee, nn, uu, tt = (max(float(v), 0.0) for v in (P[0, 0], P[1, 1], P[2, 2], D[3, 3]))
    pdop = math.sqrt(ee + nn + uu)
    gdop = math.sqrt(ee + nn + uu + tt)
    return DopComponents(
        gdop=gdop,
        pdop=pdop,
        hdop=math.sqrt(ee + nn),
        vdop=math.sqrt(uu),
        tdop=math.sqrt(tt),
        sigma=float(sigma),
        rating=classify_dop(gdop),
        D=D,
    )
