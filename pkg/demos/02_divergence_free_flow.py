"""
Divergence-free flow from noise potentials
==========================================

Three independent noise fields act as a vector stream potential; taking
their curl yields a velocity field whose discrete divergence vanishes in
the interior, so nothing the flow carries ever piles up or drains away.
A fourth field, squared, becomes the spatially varying diffusivity.
"""

import numpy as np

from anomforge import (
    cfl_dt,
    curl_velocity,
    diffusivity,
    divergence,
    random_potentials,
)
from anomforge.fluid import INTERIOR_MARGIN

dims = (48, 48, 48)

# ----------------------------------------------------------------------
# 1. draw the potentials
# ----------------------------------------------------------------------
# random_potentials returns psi = (psi_x, psi_y, psi_z) plus phi, all
# octave-fractal noise on the voxel grid. Every field is deterministic
# in the seed.
pots = random_potentials(dims, (1.0, 1.0, 1.0), seed=3)
for name, fld in zip(("psi_x", "psi_y", "psi_z", "phi"), (*pots.psi, pots.phi)):
    v = fld.values
    print(f"{name}: range [{v.min():+.3f}, {v.max():+.3f}]  mean {v.mean():+.4f}")

# ----------------------------------------------------------------------
# 2. curl and check incompressibility
# ----------------------------------------------------------------------
vel = curl_velocity(pots.psi)
speed = np.sqrt(sum(c.values**2 for c in vel.components))
m = INTERIOR_MARGIN
div = divergence(vel)[m:-m, m:-m, m:-m]
print(f"\nmax speed          : {speed.max():.4f}")
print(f"max |div| interior : {np.abs(div).max():.2e}")

# ----------------------------------------------------------------------
# 3. diffusivity and a stable time step
# ----------------------------------------------------------------------
# D = phi^2 is nonnegative by construction. The CFL bound combines the
# advective and diffusive limits with a safety factor.
D = diffusivity(pots.phi)
dt = cfl_dt(vel, D)
dv = D.field.values
print(f"diffusivity range  : [{dv.min():.4f}, {dv.max():.4f}]")
print(f"stable dt          : {dt:.4f}")
