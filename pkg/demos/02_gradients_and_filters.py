"""Verify the analytic machinery numerically, end to end.

Shows the three checks the library is built on: the low-pass filter and
its exact adjoint, analytic haze-parameter gradients against central
finite differences, and the reference CNN's input gradient against a
numeric oracle.
"""

import numpy as np

from hazeattack import classifier, hazemodel, imagecore

rng = np.random.default_rng(0)

print("== replicate-padded Gaussian filtering ==")
kernel = imagecore.gaussian_kernel(3.0)
print(f"sigma=3 -> radius {kernel.radius}, kernel side {2 * kernel.radius + 1}, "
      f"weight sum {kernel.weights2d.sum():.12f}")
u, v = rng.standard_normal((16, 16)), rng.standard_normal((16, 16))
lhs = np.sum(imagecore.convolve_replicate(u, kernel) * v)
rhs = np.sum(u * imagecore.convolve_adjoint_replicate(v, kernel))
print(f"adjoint identity <Cu,v> - <u,Av>: {abs(lhs - rhs):.2e}")

print("\n== haze-parameter gradients vs finite differences ==")
img = rng.random((12, 12, 3))
depth = rng.random((12, 12))
target = rng.random((12, 12, 3))
k = imagecore.gaussian_kernel(1.5)
a_raw = rng.uniform(0.2, 0.8, (12, 12))
b_raw = rng.uniform(0.05, 0.4, (12, 12))


def loss(ar, br):
    h, _, _, _ = hazemodel.haze_forward(img, depth, hazemodel.HazeFields(ar, br), k, k)
    return 0.5 * float(np.sum((h - target) ** 2))


h, a, beta, t = hazemodel.haze_forward(img, depth, hazemodel.HazeFields(a_raw, b_raw), k, k)
ga, gb = hazemodel.grad_haze_params(h - target, img, depth, a, t, k, k)
step = 1e-5
probe = [(3, 4), (0, 0), (11, 7)]
for r, c in probe:
    ap, am = a_raw.copy(), a_raw.copy()
    ap[r, c] += step
    am[r, c] -= step
    fd = (loss(ap, b_raw) - loss(am, b_raw)) / (2 * step)
    print(f"dJ/dA'[{r},{c}] analytic {ga[r, c]:+.8f}  finite-diff {fd:+.8f}")

print("\n== CNN input gradient vs numeric oracle ==")
w = classifier.init_reference_weights(input_size=16, n_classes=4, seed=1)
x = rng.random((16, 16, 3))
analytic = classifier.input_gradient(w, x, y=2)
numeric = classifier.numeric_input_gradient(lambda z: classifier.forward(w, z), x, 2)
rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
print(f"relative error over all {x.size} input components: {rel:.2e}")
