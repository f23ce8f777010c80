"""Forward haze synthesis and exact analytic parameter gradients.

The forward model composes three steps:

* smooth raw parameter fields:  A = a_raw * f_A,  beta = beta_raw * f_B
  (replicate-padded Gaussian convolution);
* transmission:                 t(x) = exp(-beta(x) * d(x));
* blend:                        H(x, c) = I(x, c) * t(x) + A(x) * (1 - t(x)).

The blend is a per-pixel convex combination of scene radiance and
atmospheric light, so H stays inside [0, 1] with no clipping anywhere.
Gradients are hand-derived in closed form (the graph is shallow and
fixed), which keeps them exactly testable against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import (
    GaussianKernel,
    convolve_adjoint_replicate,
    convolve_replicate,
    require_field,
    require_image,
    require_same_shape,
)


@dataclass(frozen=True)
class HazeFields:
    """Raw (unsmoothed) per-pixel haze parameters.

    ``a_raw`` is the unsmoothed atmospheric light in [0, 1]; ``beta_raw``
    the unsmoothed scattering coefficient (>= 0, per unit normalized
    depth).  One scalar per pixel, shared across the color channels.
    """

    a_raw: np.ndarray
    beta_raw: np.ndarray

    def __post_init__(self):
        require_field(self.a_raw, "a_raw")
        require_field(self.beta_raw, "beta_raw")
        require_same_shape(self.a_raw, self.beta_raw)
        if self.a_raw.min() < 0.0 or self.a_raw.max() > 1.0:
            raise ValueError("a_raw must lie in [0, 1]")
        if self.beta_raw.min() < 0.0:
            raise ValueError("beta_raw must be non-negative")


@dataclass(frozen=True)
class HazeScalars:
    """Globally constant haze parameters (homogeneous atmosphere)."""

    a: float
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"atmospheric light must lie in [0, 1], got {self.a}")
        if self.beta < 0.0:
            raise ValueError(f"scattering coefficient must be >= 0, got {self.beta}")


def transmission(d: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """t(x) = exp(-beta(x) * d(x)); lies in (0, 1] for beta, d >= 0."""
    require_field(d, "depth")
    require_field(beta, "beta")
    require_same_shape(d, beta)
    if beta.min() < 0.0:
        raise ValueError("beta must be non-negative")
    return np.exp(-beta * d)


def synthesize(i: np.ndarray, a: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Blend scene radiance toward atmospheric light by transmission.

    H(x, c) = I(x, c) * t(x) + a(x) * (1 - t(x)).  ``a`` is broadcast
    identically over the three channels.  No clipping is performed: with
    a in [0, 1] and t in [0, 1] the result is automatically in [0, 1].
    """
    require_image(i)
    require_field(a, "atmospheric light")
    require_field(t, "transmission")
    require_same_shape(i, a)
    require_same_shape(i, t)
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("atmospheric light must lie in [0, 1]")
    if t.min() < 0.0 or t.max() > 1.0:
        raise ValueError("transmission must lie in [0, 1]")
    t3 = t[:, :, None]
    return i * t3 + a[:, :, None] * (1.0 - t3)


def haze_forward(
    i: np.ndarray,
    d: np.ndarray,
    p: HazeFields,
    k_a: GaussianKernel,
    k_b: GaussianKernel,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Full smoothed-field synthesis; returns (H, A, beta, t).

    The intermediates (smoothed light A, smoothed scattering beta,
    transmission t) are returned so gradient evaluation can reuse them.
    """
    require_image(i)
    require_same_shape(i, d)
    require_same_shape(i, p.a_raw)
    a = convolve_replicate(p.a_raw, k_a)
    beta = convolve_replicate(p.beta_raw, k_b)
    # convolution is a convex combination, so a stays in [0,1] and beta >= 0
    # up to float rounding; snap the harmless eps-level excursions.
    a = np.clip(a, 0.0, 1.0)
    beta = np.maximum(beta, 0.0)
    t = transmission(d, beta)
    h = synthesize(i, a, t)
    return h, a, beta, t


def haze_homogeneous(i: np.ndarray, d: np.ndarray, s: HazeScalars) -> np.ndarray:
    """Synthesis with globally constant atmospheric light and scattering."""
    require_image(i)
    require_field(d, "depth")
    require_same_shape(i, d)
    t = np.exp(-s.beta * d)
    t3 = t[:, :, None]
    return i * t3 + s.a * (1.0 - t3)


def grad_haze_params(
    upstream: np.ndarray,
    i: np.ndarray,
    d: np.ndarray,
    a: np.ndarray,
    t: np.ndarray,
    k_a: GaussianKernel,
    k_b: GaussianKernel,
) -> tuple[np.ndarray, np.ndarray]:
    """Backpropagate dJ/dH to the raw parameter fields of haze_forward.

    With the forward intermediates (a, t) from the same call:

        dJ/dA(x)    = sum_c upstream(x, c) * (1 - t(x))
        dJ/dbeta(x) = sum_c upstream(x, c) * (a(x) - I(x, c)) * d(x) * t(x)

    followed by the convolution adjoints onto the raw fields.
    """
    require_image(i)
    require_same_shape(upstream, i)
    grad_a_smooth = np.sum(upstream, axis=2) * (1.0 - t)
    grad_b_smooth = np.sum(upstream * (a[:, :, None] - i), axis=2) * d * t
    grad_a_raw = convolve_adjoint_replicate(grad_a_smooth, k_a)
    grad_b_raw = convolve_adjoint_replicate(grad_b_smooth, k_b)
    return grad_a_raw, grad_b_raw


def grad_haze_scalars(
    upstream: np.ndarray,
    i: np.ndarray,
    d: np.ndarray,
    s: HazeScalars,
) -> tuple[float, float]:
    """Gradient of a scalar loss w.r.t. the two homogeneous parameters.

    These are the field gradients reduced over all pixels (a constant
    field is the sum of per-pixel contributions).
    """
    require_image(i)
    require_same_shape(upstream, i)
    require_same_shape(i, d)
    t = np.exp(-s.beta * d)
    grad_a = float(np.sum(np.sum(upstream, axis=2) * (1.0 - t)))
    grad_b = float(np.sum(np.sum(upstream * (s.a - i), axis=2) * d * t))
    return grad_a, grad_b
