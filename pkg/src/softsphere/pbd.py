"""Position-based dynamics: predict, project constraints, derive velocities.

The solver advances particle positions directly: each frame predicts
positions from velocities and gravity, then runs a fixed number of
Gauss-Seidel sweeps over all constraints, projecting each one on the
predicted positions in sequence (corrections feed forward within a sweep),
and finally recovers velocities from the position change.

Constraints:

* distance constraints keep mesh edges at rest length (cloth structure,
  deformable-body stiffness);
* collision constraints keep two contact spheres separated; sphere centers
  are treated as rigid offsets from their triangle centroids, so pushing the
  six involved particles moves the spheres apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .detect import Contact


class SolverInstabilityError(Exception):
    """Positions became non-finite; carries the frame that blew up."""

    def __init__(self, message: str, frame: int = -1) -> None:
        super().__init__(message)
        self.frame = frame


@dataclass
class ParticleState:
    """Positions, predictions, velocities, inverse masses (0 = pinned)."""

    positions: np.ndarray
    predicted: np.ndarray
    velocities: np.ndarray
    inv_mass: np.ndarray

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.predicted = np.asarray(self.predicted, dtype=np.float64)
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        self.inv_mass = np.asarray(self.inv_mass, dtype=np.float64)
        n = len(self.positions)
        if not (len(self.predicted) == len(self.velocities) == len(self.inv_mass) == n):
            raise ValueError("state arrays must have equal length")
        if np.any(self.inv_mass < 0):
            raise ValueError("inverse masses must be >= 0")

    @classmethod
    def rest(cls, positions: np.ndarray, inv_mass: np.ndarray) -> "ParticleState":
        positions = np.asarray(positions, dtype=np.float64)
        return cls(positions=positions.copy(), predicted=positions.copy(),
                   velocities=np.zeros_like(positions),
                   inv_mass=np.asarray(inv_mass, dtype=np.float64))


@dataclass
class DistanceConstraint:
    i: int
    j: int
    rest_length: float
    stiffness: float = 1.0

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise ValueError("distance constraint needs two distinct particles")
        if self.rest_length <= 0:
            raise ValueError("rest_length must be > 0")


@dataclass
class CollisionConstraint:
    """Non-penetration of two contact spheres, coupled through the centroids.

    ``offset_a``/``offset_b`` are the (fixed) sphere-center offsets from each
    triangle's centroid, captured when the contact was generated.
    """

    particles_a: np.ndarray   # 3 global particle indices
    particles_b: np.ndarray
    offset_a: np.ndarray
    offset_b: np.ndarray
    r_a: float
    r_b: float
    normal_hint: np.ndarray   # used when the centers coincide
    contact: Optional[Contact] = None


@dataclass
class SolverConfig:
    dt: float
    iterations: int = 10
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.8, 0.0]))
    stiffness: float = 1.0
    damping: float = 0.99

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        self.gravity = np.asarray(self.gravity, dtype=np.float64)


def predict(state: ParticleState, config: SolverConfig) -> None:
    """predicted = x + v*dt + dt^2*g for free particles; pinned keep x."""
    free = state.inv_mass > 0
    dt = config.dt
    state.predicted[:] = state.positions
    state.predicted[free] += (state.velocities[free] * dt
                              + (dt * dt) * config.gravity)


def project_distance(con: DistanceConstraint, state: ParticleState
                     ) -> Tuple[np.ndarray, np.ndarray]:
    """Corrections (dp_i, dp_j) for one distance constraint on predicted."""
    pi = state.predicted[con.i]
    pj = state.predicted[con.j]
    wi = float(state.inv_mass[con.i])
    wj = float(state.inv_mass[con.j])
    zero = np.zeros(3)
    if wi + wj == 0:
        return zero, zero
    diff = pi - pj
    dist = float(np.linalg.norm(diff))
    if dist < 1e-12:
        return zero, zero
    c = dist - con.rest_length
    d = diff / dist
    dp_i = -con.stiffness * (wi / (wi + wj)) * c * d
    dp_j = +con.stiffness * (wj / (wi + wj)) * c * d
    return dp_i, dp_j


def project_collision(con: CollisionConstraint, state: ParticleState
                      ) -> List[Tuple[int, np.ndarray]]:
    """Corrections for one contact: list of (particle index, delta).

    The spheres' centers are the triangle centroids plus the stored offsets;
    the violation C = |c_b - c_a| - (r_a + r_b) is removed by translating the
    two sides apart along the current center line, split by inverse-mass sums
    and distributed within each side in proportion to inverse mass (a uniform
    side moves as one; pinned particles never move).
    """
    pa = state.predicted[con.particles_a]
    pb = state.predicted[con.particles_b]
    ca = pa.mean(axis=0) + con.offset_a
    cb = pb.mean(axis=0) + con.offset_b
    dvec = cb - ca
    dist = float(np.linalg.norm(dvec))
    c = dist - (con.r_a + con.r_b)
    if c >= 0:
        return []
    n = con.normal_hint if dist < 1e-12 else dvec / dist
    wa = state.inv_mass[con.particles_a]
    wb = state.inv_mass[con.particles_b]
    W = float(wa.sum() + wb.sum())
    if W == 0:
        return []
    out: List[Tuple[int, np.ndarray]] = []
    for k in range(3):
        if wa[k] > 0:
            out.append((int(con.particles_a[k]), (3.0 * wa[k] * c / W) * n))
    for k in range(3):
        if wb[k] > 0:
            out.append((int(con.particles_b[k]), (-3.0 * wb[k] * c / W) * n))
    return out


def collision_violation(con: CollisionConstraint, state: ParticleState) -> float:
    """Current signed violation C (negative = penetrating)."""
    ca = state.predicted[con.particles_a].mean(axis=0) + con.offset_a
    cb = state.predicted[con.particles_b].mean(axis=0) + con.offset_b
    return float(np.linalg.norm(cb - ca)) - (con.r_a + con.r_b)


def solve_step(state: ParticleState,
               distance_constraints: Sequence[DistanceConstraint],
               collision_constraints: Sequence[CollisionConstraint],
               config: SolverConfig, frame: int = 0) -> List[float]:
    """Gauss-Seidel sweeps, then commit positions and update velocities.

    Returns the convergence trace: max absolute constraint violation seen in
    each sweep.  Raises SolverInstabilityError when positions go non-finite.
    """
    n = len(state.positions)
    # flat local float lists: the sequential sweep is pure Python and this
    # keeps per-projection overhead low
    px = state.predicted[:, 0].tolist()
    py = state.predicted[:, 1].tolist()
    pz = state.predicted[:, 2].tolist()
    w = state.inv_mass.tolist()
    dcons = [(c.i, c.j, c.rest_length, c.stiffness) for c in distance_constraints]
    ccons = []
    for c in collision_constraints:
        ccons.append((
            int(c.particles_a[0]), int(c.particles_a[1]), int(c.particles_a[2]),
            int(c.particles_b[0]), int(c.particles_b[1]), int(c.particles_b[2]),
            float(c.offset_a[0]), float(c.offset_a[1]), float(c.offset_a[2]),
            float(c.offset_b[0]), float(c.offset_b[1]), float(c.offset_b[2]),
            c.r_a + c.r_b,
            float(c.normal_hint[0]), float(c.normal_hint[1]), float(c.normal_hint[2]),
        ))
    sqrt = math.sqrt
    trace: List[float] = []
    for _ in range(config.iterations):
        worst = 0.0
        for (i, j, rest, k) in dcons:
            dx = px[i] - px[j]
            dy = py[i] - py[j]
            dz = pz[i] - pz[j]
            dist = sqrt(dx * dx + dy * dy + dz * dz)
            if dist < 1e-12:
                continue
            wi = w[i]
            wj = w[j]
            wsum = wi + wj
            if wsum == 0.0:
                continue
            c = dist - rest
            ac = c if c >= 0 else -c
            if ac > worst:
                worst = ac
            s = k * c / (dist * wsum)
            sx = s * dx
            sy = s * dy
            sz = s * dz
            px[i] -= wi * sx
            py[i] -= wi * sy
            pz[i] -= wi * sz
            px[j] += wj * sx
            py[j] += wj * sy
            pz[j] += wj * sz
        for (a0, a1, a2, b0, b1, b2, oax, oay, oaz, obx, oby, obz,
             rsum, hx, hy, hz) in ccons:
            cax = (px[a0] + px[a1] + px[a2]) / 3.0 + oax
            cay = (py[a0] + py[a1] + py[a2]) / 3.0 + oay
            caz = (pz[a0] + pz[a1] + pz[a2]) / 3.0 + oaz
            cbx = (px[b0] + px[b1] + px[b2]) / 3.0 + obx
            cby = (py[b0] + py[b1] + py[b2]) / 3.0 + oby
            cbz = (pz[b0] + pz[b1] + pz[b2]) / 3.0 + obz
            dx = cbx - cax
            dy = cby - cay
            dz = cbz - caz
            dist = sqrt(dx * dx + dy * dy + dz * dz)
            c = dist - rsum
            if c >= 0.0:
                continue
            if -c > worst:
                worst = -c
            if dist < 1e-12:
                nx, ny, nz = hx, hy, hz
            else:
                nx = dx / dist
                ny = dy / dist
                nz = dz / dist
            wa = w[a0] + w[a1] + w[a2]
            wb = w[b0] + w[b1] + w[b2]
            W = wa + wb
            if W == 0.0:
                continue
            s = 3.0 * c / W
            for idx in (a0, a1, a2):
                wi = w[idx]
                if wi > 0.0:
                    px[idx] += wi * s * nx
                    py[idx] += wi * s * ny
                    pz[idx] += wi * s * nz
            for idx in (b0, b1, b2):
                wi = w[idx]
                if wi > 0.0:
                    px[idx] -= wi * s * nx
                    py[idx] -= wi * s * ny
                    pz[idx] -= wi * s * nz
        trace.append(worst)
    state.predicted[:, 0] = px
    state.predicted[:, 1] = py
    state.predicted[:, 2] = pz
    if not np.all(np.isfinite(state.predicted)):
        raise SolverInstabilityError(
            f"non-finite positions after constraint projection (frame {frame})",
            frame=frame)
    dt = config.dt
    state.velocities[:] = (state.predicted - state.positions) / dt
    state.velocities *= config.damping
    state.positions[:] = state.predicted
    return trace
