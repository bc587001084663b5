"""Train a small artifact-removal network and clean an unseen cloud.

Training pairs come from one synthetic scene and its quantized copy; the
network is then applied to a different scene. The three head modes
differ only in how the network output becomes a noise estimate.
"""

import sys
import time

from pcartifact import (
    NetConfig,
    NoiseConfig,
    SamplerConfig,
    d1_psnr,
    denoise,
    inject_noise,
    multi_plane_cloud,
    train,
    training_pairs,
)

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
noise = NoiseConfig(qstep=4, seed=0)
train_clean = multi_plane_cloud(20_000, seed=0)
test_clean = multi_plane_cloud(20_000, seed=1)
train_noisy = inject_noise(train_clean, noise)
test_noisy = inject_noise(test_clean, noise)

pairs = training_pairs(train_noisy, train_clean, SamplerConfig(k=1024, C=2, cube_side=32), seeds=2)
print(f"{len(pairs)} training patches; noisy test PSNR {d1_psnr(test_noisy, test_clean)[2]:.2f} dB")

for mode in ("one_hot", "soft", "direct"):
    t0 = time.perf_counter()
    cfg = NetConfig(depth=3, base_channels=16, head_mode=mode, normalization="instance",
                    lr=1e-3, steps=steps, seed=0)
    ckpt = train(pairs, cfg)
    result = denoise(test_noisy, ckpt, SamplerConfig(k=1024, C=4, cube_side=32))
    psnr = d1_psnr(result.cloud, test_clean)[2]
    print(f"{mode:>8}: loss {ckpt.losses[0]:.0f} -> {ckpt.losses[-1]:.0f}, "
          f"cleaned PSNR {psnr:.2f} dB ({time.perf_counter() - t0:.0f}s)")
