"""
Synthetic brain anatomy in three lines
======================================

Builds the procedural head phantom used throughout the package, reports
how the tissue compartments are laid out, and writes the volumes to
NIfTI so they can be opened in any standard viewer.
"""

import os

import numpy as np

from anomforge import PhantomSpec, Volume3D, make_lesion_seed, make_phantom, write_nifti

out_dir = os.path.join(os.path.dirname(__file__), "out", "01_phantom_anatomy")
os.makedirs(out_dir, exist_ok=True)

# ----------------------------------------------------------------------
# 1. build the anatomy
# ----------------------------------------------------------------------
# One seed controls everything: the head ellipsoid, the ventricles and
# the wobbly gray/white interface. Same seed, same phantom, always.
spec = PhantomSpec(dims=(64, 64, 64), seed=7)
vol, wm, brain = make_phantom(spec)

n_total = vol.values.size
n_brain = int(brain.bits.sum())
n_wm = int(wm.bits.sum())
print(f"volume dims        : {vol.dims}, spacing {vol.spacing}")
print(f"brain voxels       : {n_brain} ({100.0 * n_brain / n_total:.1f}% of the box)")
print(f"white matter voxels: {n_wm} ({100.0 * n_wm / n_brain:.1f}% of the brain)")

# intensities live on [0, 1]; white matter is the bright compartment
print(f"intensity range    : [{vol.values.min():.3f}, {vol.values.max():.3f}]")
print(f"mean inside wm     : {vol.values[wm.bits].mean():.3f}")
print(f"mean outside brain : {vol.values[~brain.bits].mean():.3f}")

# ----------------------------------------------------------------------
# 2. drop a lesion seed into the white matter
# ----------------------------------------------------------------------
# The seed is a small ball placed strictly inside the brain; later demos
# move and grow it, here we just look at where it landed.
lesion = make_lesion_seed(brain, radius=3, seed=7)
idx = np.argwhere(lesion.bits)
print(f"lesion seed voxels : {idx.shape[0]}, centered near {idx.mean(axis=0).round(1)}")

# ----------------------------------------------------------------------
# 3. save everything
# ----------------------------------------------------------------------
def as_volume(mask):
    return Volume3D(mask.bits.astype(np.float64), spacing=vol.spacing)


write_nifti(vol, os.path.join(out_dir, "phantom.nii.gz"))
write_nifti(as_volume(brain), os.path.join(out_dir, "brain_mask.nii.gz"))
write_nifti(as_volume(wm), os.path.join(out_dir, "wm_mask.nii.gz"))
write_nifti(as_volume(lesion), os.path.join(out_dir, "lesion_seed.nii.gz"))
print(f"wrote 4 volumes to {out_dir}")
