"""Mask-confined advection-diffusion of a probability field.

The field P in [0, 1] is transported by

    dP/dt = -v . grad(P) + div(D grad(P)),        v = curl(psi),  D = phi**2

inside a brain mask with zero-flux boundaries, where the three psi components
and phi are Perlin-noise potentials. Taking v as a curl makes the velocity
divergence-free by construction, so the flow only rearranges P.

Discretization (first order, explicit):

* advection: dimensionally split upwind sweeps, one per axis. Each sweep is a
  convex update under dt * max|v_a| <= dx_a, which is why the advective CFL
  bound below is per-axis. Out-of-mask neighbors are mirrored to the center
  value (zero normal gradient).
* diffusion: unsplit central flux form with face-averaged diffusivity. Faces
  crossing the mask boundary carry zero diffusivity, so no mass leaves the
  mask; opposite-face coefficients are shifted copies of the same floats and
  interior fluxes cancel bitwise in the mass budget.

The combined update is monotone under the :func:`cfl_dt` bound: any residual
[0, 1] violation is pure float rounding, measured before the final clamp.

Everything here is plain vectorized numpy; results are independent of voxel
traversal order by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .perlin import PerlinParams, derive_seed, perlin3
from .volume import BinaryMask3D, Volume3D

# interior margin (voxels) inside which one-sided border stencils never reach
INTERIOR_MARGIN = 2

_DIV_TOL = 1e-10


def divergence(v: "VelocityField") -> np.ndarray:
    """Discrete divergence with the same stencil family as :func:`curl_velocity`.

    Central differences in the interior, one-sided at array borders. Only
    voxels at least :data:`INTERIOR_MARGIN` voxels from the border are free of
    one-sided contributions; the curl/divergence cancellation is exact (to
    rounding) there and nowhere else.
    """
    sp = v.components[0].spacing
    out = np.zeros(v.components[0].dims, dtype=np.float64)
    for a in range(3):
        out += np.gradient(v.components[a].values, sp[a], axis=a, edge_order=1)
    return out


def _interior(arr: np.ndarray) -> np.ndarray:
    m = INTERIOR_MARGIN
    if min(arr.shape) <= 2 * m:
        return arr[0:0, 0:0, 0:0]
    return arr[m:-m, m:-m, m:-m]


def _check_grid(name: str, vol: Volume3D, ref: Volume3D) -> None:
    if vol.dims != ref.dims or vol.spacing != ref.spacing:
        raise ValueError(f"{name}: grid mismatch {vol.dims}/{vol.spacing} vs {ref.dims}/{ref.spacing}")


@dataclass(frozen=True)
class PotentialSet:
    """Three stream potentials (velocity) plus one diffusivity potential."""

    psi: tuple[Volume3D, Volume3D, Volume3D]
    phi: Volume3D

    def __post_init__(self) -> None:
        if len(self.psi) != 3:
            raise ValueError("psi must have exactly three components")
        for i, c in enumerate(self.psi):
            _check_grid(f"psi[{i}]", c, self.phi)
        object.__setattr__(self, "psi", tuple(self.psi))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.phi.dims


@dataclass(frozen=True)
class VelocityField:
    """Voxel velocities (one volume per axis), divergence-free in the interior."""

    components: tuple[Volume3D, Volume3D, Volume3D]

    def __post_init__(self) -> None:
        if len(self.components) != 3:
            raise ValueError("velocity needs exactly three components")
        for i, c in enumerate(self.components):
            _check_grid(f"component[{i}]", c, self.components[0])
        object.__setattr__(self, "components", tuple(self.components))
        div = _interior(divergence(self))
        if div.size and float(np.abs(div).max()) > _DIV_TOL:
            raise ValueError(
                f"velocity is not discretely divergence-free: max |div| = {np.abs(div).max():.3e}"
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.components[0].dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.components[0].spacing

    def max_speed(self, axis: int) -> float:
        return float(np.abs(self.components[axis].values).max())


@dataclass(frozen=True)
class DiffusivityField:
    """Nonnegative isotropic diffusivity per voxel."""

    field: Volume3D

    def __post_init__(self) -> None:
        if float(self.field.values.min()) < 0.0:
            raise ValueError("diffusivity must be >= 0 everywhere")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.field.dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.field.spacing

    def max_value(self) -> float:
        return float(self.field.values.max())


@dataclass(frozen=True)
class IntegrationParams:
    """Explicit integration settings; ``dt=None`` picks the CFL step."""

    t_max: float
    dt: float | None = None
    safety: float = 0.9

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t_max) and self.t_max >= 0.0):
            raise ValueError(f"t_max must be finite and >= 0, got {self.t_max}")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive when given, got {self.dt}")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError(f"safety must be in (0, 1], got {self.safety}")


@dataclass
class StepStats:
    """Mutable run bookkeeping filled in by :func:`step` / :func:`randomize`."""

    steps: int = 0
    dt: float = 0.0
    max_boundedness_violation: float = 0.0

    def record(self, violation: float) -> None:
        self.steps += 1
        if violation > self.max_boundedness_violation:
            self.max_boundedness_violation = violation


def curl_velocity(psi: Sequence[Volume3D]) -> VelocityField:
    """Velocity as the curl of the stream potentials.

    v_x = d(psi_z)/dy - d(psi_y)/dz, and cyclically. Central differences in
    the interior, one-sided at the array border (np.gradient stencils).
    """
    if len(psi) != 3:
        raise ValueError("need exactly three stream potentials")
    px, py, pz = psi
    _check_grid("psi[1]", py, px)
    _check_grid("psi[2]", pz, px)
    sp = px.spacing

    def d(valsvol: Volume3D, axis: int) -> np.ndarray:
        return np.gradient(valsvol.values, sp[axis], axis=axis, edge_order=1)

    vx = d(pz, 1) - d(py, 2)
    vy = d(px, 2) - d(pz, 0)
    vz = d(py, 0) - d(px, 1)
    return VelocityField(tuple(Volume3D(c, sp) for c in (vx, vy, vz)))


def diffusivity(phi: Volume3D) -> DiffusivityField:
    """D = phi**2 (squaring keeps the tensor nonnegative)."""
    return DiffusivityField(phi.with_values(phi.values * phi.values))


def cfl_dt(
    v: VelocityField,
    D: DiffusivityField,
    t_max: float = math.inf,
    safety: float = 0.9,
) -> float:
    """Largest monotone explicit step, capped at ``t_max``.

    dt = safety * min( min_a dx_a / max|v_a| ,  min(dx)^2 / (6 max D) )

    The advective part is the per-axis bound of the split upwind sweeps; the
    diffusive part is the unsplit central-scheme bound. Zero velocity and zero
    diffusivity impose no limit, so the cap ``t_max`` is returned.
    """
    if v.dims != D.dims or v.spacing != D.spacing:
        raise ValueError(f"velocity/diffusivity grid mismatch: {v.dims} vs {D.dims}")
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must be in (0, 1], got {safety}")
    sp = v.spacing
    bound = math.inf
    for a in range(3):
        speed = v.max_speed(a)
        if speed > 0.0:
            bound = min(bound, sp[a] / speed)
    dmax = D.max_value()
    if dmax > 0.0:
        bound = min(bound, min(sp) ** 2 / (6.0 * dmax))
    return min(safety * bound, t_max)


def _axis_shift(arr: np.ndarray, axis: int, delta: int, fill=0) -> np.ndarray:
    """Shift one axis by +-1, filling the vacated slice."""
    out = np.full_like(arr, fill)
    n = arr.shape[axis]
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if delta >= 0:
        src[axis] = slice(0, n - delta)
        dst[axis] = slice(delta, n)
    else:
        src[axis] = slice(-delta, n)
        dst[axis] = slice(0, n + delta)
    out[tuple(dst)] = arr[tuple(src)]
    return out


class _StepKernel:
    """Loop-invariant coefficient arrays for repeated update applications."""

    def __init__(
        self,
        v: VelocityField,
        D: DiffusivityField,
        dt: float,
        mask: BinaryMask3D,
        check_cfl: bool = True,
    ) -> None:
        if v.dims != mask.dims:
            raise ValueError(f"velocity/mask grid mismatch: {v.dims} vs {mask.dims}")
        if not dt > 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        if check_cfl:
            # relative slack for the dt = t_max/n rounding path
            bound = cfl_dt(v, D, safety=1.0)
            if dt > bound * (1.0 + 1e-9):
                raise ValueError(f"dt={dt} exceeds the monotone bound {bound}")
        self.dt = float(dt)

        inside = mask.bits
        inside_f = inside.astype(np.float64)
        sp = v.spacing

        self.adv: list[tuple[np.ndarray, np.ndarray] | None] = []
        for a in range(3):
            va = v.components[a].values
            if not np.any(va):
                self.adv.append(None)
                continue
            c = dt / sp[a]
            has_m = _axis_shift(inside, a, +1, fill=False)  # neighbor at i-1 in mask
            has_p = _axis_shift(inside, a, -1, fill=False)  # neighbor at i+1 in mask
            a_m = (c * np.maximum(va, 0.0)) * inside_f * has_m
            a_p = (c * np.minimum(va, 0.0)) * inside_f * has_p
            self.adv.append((a_m, a_p))

        self.dif: list[tuple[np.ndarray, np.ndarray]] | None = None
        dvals = D.field.values
        if np.any(dvals):
            self.dif = []
            for a in range(3):
                # face (i, i+1): averaged D, zeroed when the face leaves the mask
                open_face = inside & _axis_shift(inside, a, -1, fill=False)
                k_up = (dt / sp[a] ** 2) * 0.5 * (dvals + _axis_shift(dvals, a, -1)) * open_face
                # the (i-1, i) face reuses the identical floats: bitwise flux pairing
                k_dn = _axis_shift(k_up, a, +1)
                self.dif.append((k_up, k_dn))

    def apply(self, p: np.ndarray) -> tuple[np.ndarray, float]:
        """One explicit step on raw values; returns (new values, pre-clamp excess)."""
        for axis, pair in enumerate(self.adv):
            if pair is None:
                continue
            a_m, a_p = pair
            p_m = _axis_shift(p, axis, +1)
            p_p = _axis_shift(p, axis, -1)
            p = p - a_m * (p - p_m) - a_p * (p_p - p)
        if self.dif is not None:
            acc = None
            for axis, (k_up, k_dn) in enumerate(self.dif):
                p_p = _axis_shift(p, axis, -1)
                p_m = _axis_shift(p, axis, +1)
                term = k_up * (p_p - p) + k_dn * (p_m - p)
                acc = term if acc is None else acc + term
            p = p + acc
        lo = float(p.min())
        hi = float(p.max())
        violation = max(0.0 - lo, hi - 1.0, 0.0)
        if violation > 0.0:
            p = np.clip(p, 0.0, 1.0)
        return p, violation


def _validate_state(P: Volume3D, mask: BinaryMask3D) -> None:
    if P.dims != mask.dims:
        raise ValueError(f"field/mask grid mismatch: {P.dims} vs {mask.dims}")
    lo = float(P.values.min())
    hi = float(P.values.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"P must lie in [0, 1], got range [{lo}, {hi}]")
    if P.values[~mask.bits].size and float(np.abs(P.values[~mask.bits]).max()) > 0.0:
        raise ValueError("P must be exactly zero outside the mask")


def step(
    P: Volume3D,
    v: VelocityField,
    D: DiffusivityField,
    dt: float,
    mask: BinaryMask3D,
    stats: StepStats | None = None,
) -> Volume3D:
    """Advance P by one explicit advection-diffusion step inside the mask.

    Rejects dt above the monotone bound. The result is clamped to [0, 1]; the
    pre-clamp excess (pure rounding under a valid dt) is recorded in ``stats``.
    """
    _check_grid("velocity", v.components[0], P)
    _validate_state(P, mask)
    kernel = _StepKernel(v, D, dt, mask)
    out, violation = kernel.apply(P.values)
    if stats is not None:
        stats.dt = dt
        stats.record(violation)
    return P.with_values(out)


def randomize(
    P0: Volume3D,
    potentials: PotentialSet,
    params: IntegrationParams,
    mask: BinaryMask3D,
    stats: StepStats | None = None,
    on_snapshot: Callable[[int, Volume3D], None] | None = None,
    snapshot_every: int = 0,
) -> Volume3D:
    """Integrate the seed field to t_max through the potential-derived flow.

    The number of steps is ``ceil(t_max / dt)`` with the step shrunk to divide
    t_max exactly, so the requested horizon is always hit. ``on_snapshot`` (if
    given) receives the state every ``snapshot_every`` steps.
    """
    _check_grid("potentials", potentials.phi, P0)
    _validate_state(P0, mask)
    if params.t_max == 0.0:
        return P0
    v = curl_velocity(potentials.psi)
    D = diffusivity(potentials.phi)
    dt = params.dt if params.dt is not None else cfl_dt(v, D, params.t_max, params.safety)
    n_steps = max(1, math.ceil(params.t_max / dt - 1e-12))
    dt_eff = params.t_max / n_steps

    kernel = _StepKernel(v, D, dt_eff, mask)
    if stats is not None:
        stats.dt = dt_eff
    p = P0.values
    for i in range(1, n_steps + 1):
        p, violation = kernel.apply(p)
        if stats is not None:
            stats.record(violation)
        if on_snapshot is not None and snapshot_every > 0 and i % snapshot_every == 0:
            on_snapshot(i, P0.with_values(p.copy()))
    return P0.with_values(p)


def random_potentials(
    dims: tuple[int, int, int],
    spacing: tuple[float, float, float],
    seed: int,
    octaves: int = 4,
    base_frequency: float = 2.0,
    persistence: float = 0.5,
    amplitude_v: float = 0.5,
    amplitude_d: float | None = None,
) -> PotentialSet:
    """Draw the four Perlin potentials and calibrate their strength.

    psi is rescaled so the derived speed peaks at exactly ``amplitude_v``
    (voxels per unit time on the coarsest axis), and phi so the diffusivity
    peaks at ``amplitude_d`` (default ``amplitude_v**2``). Curl is linear, so
    rescaling keeps the velocity divergence-free. Degenerate all-zero noise is
    left unscaled.
    """
    if amplitude_v < 0.0:
        raise ValueError(f"amplitude_v must be >= 0, got {amplitude_v}")
    if amplitude_d is None:
        amplitude_d = amplitude_v**2
    if amplitude_d < 0.0:
        raise ValueError(f"amplitude_d must be >= 0, got {amplitude_d}")

    def noise(component: int) -> Volume3D:
        p = PerlinParams(
            seed=derive_seed(seed, component),
            octaves=octaves,
            base_frequency=base_frequency,
            persistence=persistence,
            amplitude=1.0,
        )
        return perlin3(p, dims, spacing)

    psi = [noise(c) for c in range(3)]
    phi = noise(3)

    v = curl_velocity(psi)
    peak = max(v.max_speed(a) for a in range(3))
    if peak > 0.0:
        s = amplitude_v / peak
        psi = [c.with_values(c.values * s) for c in psi]

    peak_phi = float(np.abs(phi.values).max())
    if peak_phi > 0.0:
        s = math.sqrt(amplitude_d) / peak_phi
        phi = phi.with_values(phi.values * s)

    return PotentialSet(psi=tuple(psi), phi=phi)
