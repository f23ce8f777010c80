"""Constrained momentum sign-gradient attacks on haze parameters.

Two variants share one engine shape: a homogeneous attack tuning a single
(atmospheric light, scattering) scalar pair, and an inhomogeneous attack
tuning per-pixel raw fields that are Gaussian-smoothed before synthesis.
Both take momentum sign-gradient steps (the accumulator is the running
L1-normalized gradient) and project every iterate onto the l-infinity
box around the initialization intersected with the physical range.

Projecting the *raw* fields is sufficient for the smoothed fields to
satisfy the same box: the smoothing kernel is non-negative, sums to one,
and replicate padding keeps every output a convex combination of inputs.

Pixel-space baselines (FGSM / I-FGSM / MI-FGSM) are included because the
evaluation protocol compares haze attacks against them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .hazemodel import (
    HazeFields,
    HazeScalars,
    grad_haze_params,
    grad_haze_scalars,
    haze_forward,
    haze_homogeneous,
)
from .imagecore import gaussian_kernel, require_image, require_field, require_same_shape
from .classifier import softmax_cross_entropy


class GradientClassifier(Protocol):
    """What the attack engine needs from a target model."""

    def logits(self, img: np.ndarray) -> np.ndarray: ...
    def predict(self, img: np.ndarray) -> int: ...
    def loss_grad(self, img: np.ndarray, y: int) -> tuple[float, np.ndarray]: ...


@dataclass(frozen=True)
class AttackConfig:
    """Attack hyperparameters.

    Defaults follow the momentum sign-gradient schedule: 10 iterations,
    momentum 1.0, initialization (0.9, 0.1), step size 0.01 for both
    parameters.  The default perturbation radii of 0.1 let the light
    range over [0.8, 1.0] and the scattering over [0, 0.2].
    """

    eps_a: float = 0.1
    eps_b: float = 0.1
    a0: float = 0.9
    b0: float = 0.1
    alpha_a: float = 0.01
    alpha_b: float = 0.01
    n: int = 10
    mu: float = 1.0
    sigma_a: float = 3.0
    sigma_b: float = 3.0
    early_stop: bool = False

    def __post_init__(self):
        if self.eps_a <= 0 or self.eps_b <= 0:
            raise ValueError("perturbation radii must be positive")
        if not 0.0 <= self.a0 <= 1.0:
            raise ValueError(f"a0 must lie in [0, 1], got {self.a0}")
        if self.b0 < 0.0:
            raise ValueError(f"b0 must be >= 0, got {self.b0}")
        if self.alpha_a <= 0 or self.alpha_b <= 0:
            raise ValueError("step sizes must be positive")
        if self.n < 0:
            raise ValueError(f"iteration count must be >= 0, got {self.n}")
        if self.mu < 0:
            raise ValueError(f"momentum must be >= 0, got {self.mu}")
        if self.sigma_a <= 0 or self.sigma_b <= 0:
            raise ValueError("filter widths must be positive")
        # feasibility of the projection boxes
        if max(self.a0 - self.eps_a, 0.0) > min(self.a0 + self.eps_a, 1.0):
            raise ValueError("infeasible atmospheric-light box")
        if max(self.b0 - self.eps_b, 0.0) > self.b0 + self.eps_b:
            raise ValueError("infeasible scattering box")


@dataclass(frozen=True)
class AttackResult:
    """Outcome of one attack on one image."""

    adversarial: np.ndarray
    fields: HazeFields | HazeScalars | None
    pred_clean: int
    pred_adv: int
    true_label: int
    success: bool
    loss_trace: tuple[float, ...]
    iterations_run: int

    def __post_init__(self):
        if self.success != (self.pred_adv != self.true_label):
            raise ValueError("success flag inconsistent with predictions")


def momentum_update(g, grad, mu: float):
    """Accumulate an L1-normalized gradient: g' = mu*g + grad/||grad||_1.

    Works for scalars (the 1-norm degenerates to |grad|) and for fields
    (1-norm over the whole field).  A zero gradient leaves only the decayed
    momentum term.
    """
    norm = float(np.sum(np.abs(grad)))
    if not np.isfinite(norm):
        raise ValueError("gradient has non-finite 1-norm")
    if norm == 0.0:
        return mu * g
    return mu * g + grad / norm


def project_box(field, center: float, eps: float, lo: float, hi: float):
    """Clamp pixel-wise to [max(center-eps, lo), min(center+eps, hi)]."""
    lower = max(center - eps, lo)
    upper = min(center + eps, hi)
    if lower > upper:
        raise ValueError(
            f"empty feasible interval: [{center}-{eps}, {center}+{eps}] "
            f"outside [{lo}, {hi}]")
    return np.clip(field, lower, upper)


def _loss_at(clf: GradientClassifier, img: np.ndarray, y: int) -> float:
    return softmax_cross_entropy(clf.logits(img), y)[0]


def attack_hadvhaze(
    i: np.ndarray,
    d: np.ndarray,
    clf: GradientClassifier,
    y: int,
    cfg: AttackConfig = AttackConfig(),
) -> AttackResult:
    """Homogeneous haze attack: tune one global (light, scattering) pair.

    Depth is taken as given (estimated once from the clean image) and
    frozen across iterations.  The two scalars get independent momentum
    accumulators; every step is +/- the configured step size.
    """
    require_image(i)
    require_field(d, "depth")
    require_same_shape(i, d)
    pred_clean = clf.predict(i)
    a, b = cfg.a0, cfg.b0
    g_a, g_b = 0.0, 0.0
    trace: list[float] = []
    iterations = 0
    for _ in range(cfg.n):
        scalars = HazeScalars(a, b)
        hazy = haze_homogeneous(i, d, scalars)
        loss, grad_h = clf.loss_grad(hazy, y)
        trace.append(loss)
        if cfg.early_stop and int(clf.logits(hazy).argmax()) != y:
            break
        grad_a, grad_b = grad_haze_scalars(grad_h, i, d, scalars)
        g_a = momentum_update(g_a, grad_a, cfg.mu)
        g_b = momentum_update(g_b, grad_b, cfg.mu)
        a = float(project_box(a + cfg.alpha_a * np.sign(g_a),
                              cfg.a0, cfg.eps_a, 0.0, 1.0))
        b = float(project_box(b + cfg.alpha_b * np.sign(g_b),
                              cfg.b0, cfg.eps_b, 0.0, np.inf))
        iterations += 1
    final_scalars = HazeScalars(a, b)
    adversarial = haze_homogeneous(i, d, final_scalars)
    trace.append(_loss_at(clf, adversarial, y))
    pred_adv = clf.predict(adversarial)
    return AttackResult(
        adversarial=adversarial,
        fields=final_scalars,
        pred_clean=pred_clean,
        pred_adv=pred_adv,
        true_label=y,
        success=pred_adv != y,
        loss_trace=tuple(trace),
        iterations_run=iterations,
    )


IterationCallback = Callable[
    [int, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], None]


def attack_iadvhaze(
    i: np.ndarray,
    d: np.ndarray,
    clf: GradientClassifier,
    y: int,
    cfg: AttackConfig = AttackConfig(),
    iteration_callback: IterationCallback | None = None,
) -> AttackResult:
    """Inhomogeneous haze attack: tune smoothed per-pixel parameter fields.

    Raw fields start constant at the initialization, take per-pixel
    momentum sign steps (one 1-norm over the whole field), and are
    projected onto their boxes after every step.  The optional callback
    receives (iteration, a_raw, beta_raw, smoothed A, smoothed beta,
    rendering) for each iterate including the final one.
    """
    require_image(i)
    require_field(d, "depth")
    require_same_shape(i, d)
    k_a = gaussian_kernel(cfg.sigma_a)
    k_b = gaussian_kernel(cfg.sigma_b)
    pred_clean = clf.predict(i)
    shape = d.shape
    a_raw = np.full(shape, cfg.a0)
    b_raw = np.full(shape, cfg.b0)
    g_a = np.zeros(shape)
    g_b = np.zeros(shape)
    trace: list[float] = []
    iterations = 0
    stopped = False
    for k in range(cfg.n):
        fields = HazeFields(a_raw, b_raw)
        hazy, a_smooth, b_smooth, t = haze_forward(i, d, fields, k_a, k_b)
        if iteration_callback is not None:
            iteration_callback(k, a_raw, b_raw, a_smooth, b_smooth, hazy)
        loss, grad_h = clf.loss_grad(hazy, y)
        trace.append(loss)
        if cfg.early_stop and int(clf.logits(hazy).argmax()) != y:
            stopped = True
            break
        grad_a, grad_b = grad_haze_params(grad_h, i, d, a_smooth, t, k_a, k_b)
        g_a = momentum_update(g_a, grad_a, cfg.mu)
        g_b = momentum_update(g_b, grad_b, cfg.mu)
        a_raw = project_box(a_raw + cfg.alpha_a * np.sign(g_a),
                            cfg.a0, cfg.eps_a, 0.0, 1.0)
        b_raw = project_box(b_raw + cfg.alpha_b * np.sign(g_b),
                            cfg.b0, cfg.eps_b, 0.0, np.inf)
        iterations += 1
    final_fields = HazeFields(a_raw, b_raw)
    adversarial, a_smooth, b_smooth, _ = haze_forward(i, d, final_fields, k_a, k_b)
    if iteration_callback is not None and not stopped:
        iteration_callback(cfg.n, a_raw, b_raw, a_smooth, b_smooth, adversarial)
    trace.append(_loss_at(clf, adversarial, y))
    pred_adv = clf.predict(adversarial)
    return AttackResult(
        adversarial=adversarial,
        fields=final_fields,
        pred_clean=pred_clean,
        pred_adv=pred_adv,
        true_label=y,
        success=pred_adv != y,
        loss_trace=tuple(trace),
        iterations_run=iterations,
    )


# ---------------------------------------------------------------------------
# Pixel-noise baselines
# ---------------------------------------------------------------------------

BASELINE_EPS = 10.0 / 255.0


def _finish_pixel_attack(i, clf, y, adv, pred_clean, trace, iterations):
    trace.append(_loss_at(clf, adv, y))
    pred_adv = clf.predict(adv)
    return AttackResult(
        adversarial=adv,
        fields=None,
        pred_clean=pred_clean,
        pred_adv=pred_adv,
        true_label=y,
        success=pred_adv != y,
        loss_trace=tuple(trace),
        iterations_run=iterations,
    )


def baseline_fgsm(i: np.ndarray, clf: GradientClassifier, y: int,
                  eps: float = BASELINE_EPS) -> AttackResult:
    """Single sign-gradient step of size eps, clipped to [0, 1]."""
    require_image(i)
    pred_clean = clf.predict(i)
    loss, grad = clf.loss_grad(i, y)
    adv = np.clip(i + eps * np.sign(grad), 0.0, 1.0)
    return _finish_pixel_attack(i, clf, y, adv, pred_clean, [loss], 1)


def baseline_ifgsm(i: np.ndarray, clf: GradientClassifier, y: int,
                   eps: float = BASELINE_EPS, n: int = 10) -> AttackResult:
    """n steps of size eps/n, clipped to the eps-ball and [0, 1]."""
    require_image(i)
    if n < 1:
        raise ValueError("iteration count must be >= 1")
    pred_clean = clf.predict(i)
    alpha = eps / n
    adv = i.copy()
    trace: list[float] = []
    for _ in range(n):
        loss, grad = clf.loss_grad(adv, y)
        trace.append(loss)
        adv = np.clip(adv + alpha * np.sign(grad), i - eps, i + eps)
        adv = np.clip(adv, 0.0, 1.0)
    return _finish_pixel_attack(i, clf, y, adv, pred_clean, trace, n)


def baseline_mifgsm(i: np.ndarray, clf: GradientClassifier, y: int,
                    eps: float = BASELINE_EPS, n: int = 10,
                    mu: float = 1.0) -> AttackResult:
    """I-FGSM with an L1-normalized momentum accumulator."""
    require_image(i)
    if n < 1:
        raise ValueError("iteration count must be >= 1")
    pred_clean = clf.predict(i)
    alpha = eps / n
    adv = i.copy()
    g = np.zeros_like(i)
    trace: list[float] = []
    for _ in range(n):
        loss, grad = clf.loss_grad(adv, y)
        trace.append(loss)
        g = momentum_update(g, grad, mu)
        adv = np.clip(adv + alpha * np.sign(g), i - eps, i + eps)
        adv = np.clip(adv, 0.0, 1.0)
    return _finish_pixel_attack(i, clf, y, adv, pred_clean, trace, n)
