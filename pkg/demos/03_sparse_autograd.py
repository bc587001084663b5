"""A sparse convolution only touches occupied voxels, and its gradients
can be checked against finite differences."""

import numpy as np

from pcartifact.sparse import ConvKernel, SparseTensor, Tape, Var, relu, submanifold_conv, sum_all

rng = np.random.default_rng(0)
coords = np.unique(rng.integers(0, 6, size=(12, 3)), axis=0)
x = SparseTensor.from_arrays(coords, rng.normal(size=(len(coords), 2)))
kernel = ConvKernel.kaiming(27, 2, 3, rng)


def loss_for(weight, tape=None):
    k = ConvKernel(Var(weight), kernel.bias)
    y = relu(submanifold_conv(x, k, tape), tape)
    return sum_all(y.features, tape)


tape = Tape()
w = Var(kernel.weight.value.copy())
k = ConvKernel(w, kernel.bias)
out = sum_all(relu(submanifold_conv(x, k, tape), tape).features, tape)
grad = tape.backward(out, {"w": w})["w"]
print(f"{len(coords)} occupied voxels, output keeps the same {len(coords)} sites")

h = 1e-6
i = np.unravel_index(np.abs(grad).argmax(), grad.shape)
wp, wm = w.value.copy(), w.value.copy()
wp[i] += h
wm[i] -= h
fd = (loss_for(wp).value - loss_for(wm).value) / (2 * h)
print(f"largest weight gradient {grad[i]:.8f}, finite difference {fd:.8f}")
