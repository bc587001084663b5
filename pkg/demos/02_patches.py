"""Cutting a cloud into overlapping cubes and putting it back together.

Patch centers come from farthest point sampling; the number of centers is
ceil(n * C / k) so that, on average, every point is covered C times. Each
cube is moved into its own local frame, and aggregation undoes that.
"""

import numpy as np

from pcartifact import Accumulator, SamplerConfig, multi_plane_cloud, patch_count, sample_patches

cloud = multi_plane_cloud(20_000, seed=3)
print("patch_count(1e6, 20, 1e4) =", patch_count(1_000_000, 20, 10_000))

for C in (1, 2, 4):
    cfg = SamplerConfig(k=1000, C=C, cube_side=32)
    patches = sample_patches(cloud, cfg)
    sizes = np.array([len(p) for p in patches])
    acc = Accumulator(len(cloud))
    for p in patches:
        acc.add_patch(p)
    print(f"C={C}: {len(patches)} patches, median size {int(np.median(sizes))}, "
          f"mean coverage {acc.counts.mean():.2f}, uncovered {(acc.counts == 0).sum()}")

# Patches hold positions in [0, L)^3; feeding them back unchanged must
# reproduce the covered points exactly.
acc = Accumulator(len(cloud))
for p in sample_patches(cloud, SamplerConfig(k=1000, C=4, cube_side=32)):
    acc.add_patch(p)
out = acc.result(cloud)
covered = acc.counts > 0
print("identity round trip exact:", np.array_equal(out.points[covered], cloud.points[covered]))
